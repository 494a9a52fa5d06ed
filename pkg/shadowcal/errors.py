"""
Exception hierarchy for the shadow calibration toolkit
"""


class ShadowCalError(Exception):
    """Base class for every error raised by the toolkit"""


class ValidationError(ShadowCalError, ValueError):
    """Malformed input, out-of-range parameter or dimension mismatch"""


class CapExceededError(ShadowCalError):
    """A qubit count, group order or pattern weight exceeds its configured cap"""


class CalibrationError(ShadowCalError):
    """A frame operator cannot be inverted (non-positive coefficient)"""


class OracleUnavailableError(ShadowCalError):
    """Exact signals or closed forms were requested where none exist"""


class ConfigError(ShadowCalError):
    """An experiment config violates the schema"""
