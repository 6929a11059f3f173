# Configuration settings for the vegetation-landscape simulator

import os
import logging
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

VERSION = "0.3.0"

BASE_DIR = os.path.dirname(os.path.abspath(__file__))


def _env_int(name, default):
    """Read an integer setting; malformed values fall back to the default."""
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"{name}={raw!r} is not an integer, using {default}")
        return default


#--------------------------------------Run defaults-------------------------------------
# Seed used when neither the CLI nor a config file sets one
DEFAULT_SEED = _env_int("VL_SEED", 42)

# Worker threads for the per-year cell sweep
DEFAULT_THREADS = _env_int("VL_THREADS", 1)

# Root directory for run outputs
OUTPUT_DIR = os.getenv("VL_OUTPUT_DIR", "runs")

# Parameter file with the four functional types, fire regime and engine constants
PARAMS_FILE = os.getenv("VL_PARAMS_FILE", os.path.join(BASE_DIR, "data", "params_default.json"))

# Log progress every N simulated years
PROGRESS_EVERY = _env_int("VL_PROGRESS_EVERY", 25)

#--------------------------------------Harness constants-------------------------------------
# Replicate streams per stochastic consistency phase
MC_SAMPLES = _env_int("VL_MC_SAMPLES", 1000)

# Benchmark repetitions (median is reported)
BENCH_REPEATS = _env_int("VL_BENCH_REPEATS", 3)

# Floor for relative-difference denominators
REL_EPSILON = 1e-9

#--------------------------------------Logging-------------------------------------
LOG_LEVEL = os.getenv("VL_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "[%(levelname)s] %(message)s"


def configure_logging(level=None):
    """Install the single console handler used by the CLI and the API."""
    logging.basicConfig(level=level or LOG_LEVEL, format=LOG_FORMAT)
    # basicConfig is a no-op once a handler exists; the level still applies
    logging.getLogger().setLevel(level or LOG_LEVEL)
