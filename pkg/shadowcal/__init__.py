"""
Shadow calibration engine package
Noise-robust randomized measurements: group samplers, noisy simulation,
randomized-benchmarking fits, calibrated shadow estimates and exact oracles.
"""
__version__ = "0.3.0"
