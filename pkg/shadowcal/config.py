"""
Runtime settings for the shadow calibration toolkit
Values are read from the environment, optionally seeded from a .env file
"""
import os

from dotenv import load_dotenv

load_dotenv()


def _int_setting(name: str, default: int) -> int:
    """Read an integer environment variable with a fallback"""
    try:
        return int(os.getenv(name, default))
    except (TypeError, ValueError):
        return default


def _float_setting(name: str, default: float) -> float:
    """Read a float environment variable with a fallback"""
    try:
        return float(os.getenv(name, default))
    except (TypeError, ValueError):
        return default


# Largest n for which full 4^n x 4^n superoperators are materialized
DENSE_SUPEROP_CAP = _int_setting("SHADOWCAL_DENSE_CAP", 5)

# Largest n for density-matrix simulation and group sampling
SIMULATION_QUBIT_CAP = _int_setting("SHADOWCAL_SIM_CAP", 8)

# Largest group order the brute-force enumerator will build
ENUMERATION_CAP = _int_setting("SHADOWCAL_ENUM_CAP", 20000)

DEFAULT_WORKERS = max(1, _int_setting("SHADOWCAL_WORKERS", 1))
LOG_LEVEL = os.getenv("SHADOWCAL_LOG_LEVEL", "INFO").upper()

# Frozen O(1) constant for the dihedral variance bound (regression threshold)
DIHEDRAL_VARIANCE_CONSTANT = _float_setting("SHADOWCAL_DIHEDRAL_VARIANCE_CONSTANT", 3.0)

CPTP_TOLERANCE = 1e-10
COMPOSITION_TOLERANCE = 1e-9
PROBABILITY_TOLERANCE = 1e-8
STATE_TOLERANCE = 1e-10

# Experiment defaults
DEFAULT_LENGTHS = (1, 2, 4, 8, 16, 32)
DEFAULT_LOCAL_LENGTHS = (2, 3, 4)
DEFAULT_TOTAL_SHOTS = 100000
DEFAULT_MOM_GROUPS = 10
DEFAULT_MOM_GROUP_SIZE = 10000
DEFAULT_BOOTSTRAP_RESAMPLES = 200
