import os
import logging
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

LOGGER_NAME = "scaleup"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

DEFAULT_SEED = int(os.getenv("SCALEUP_SEED", "20240101"))
DEFAULT_THREADS = int(os.getenv("SCALEUP_THREADS", "1"))
DEFAULT_OUTPUT_DIR = os.getenv("SCALEUP_OUTPUT_DIR", "./scaleup_out")
DEFAULT_LOG_LEVEL = os.getenv("SCALEUP_LOG_LEVEL", "INFO")
DEFAULT_GUARD = os.getenv("SCALEUP_GUARD", "fail")

# Binomial simulation defaults
BINOMIAL_RESPONDENTS = 10000
BINOMIAL_SUBPOPULATIONS = 50
BINOMIAL_TOTAL_POPULATION = 10_000_000
BINOMIAL_SIZE_BOUNDS = (1_000, 1_000_000)
BINOMIAL_DEGREE_BOUNDS = (10, 1000)
BINOMIAL_EXPONENT = 2.0
VARYING_EXPONENTS = (-2.0, -1.0, 1.0, 2.0)

# Stochastic block model defaults
SBM_NODES = 20000
SBM_GROUPS = 20
SBM_WITHIN_RANGE = (0.25, 0.5)
SBM_BETWEEN = 0.05
SBM_CI_NODES = 5000
SBM_CI_GROUPS = 10

# Missing cells in survey CSVs
MISSING_TOKENS = ("", "NA")

_logging_configured = False


def configure_logging(level: str = None) -> logging.Logger:
    """Install a single stderr handler on the package logger (idempotent)."""
    global _logging_configured
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel((level or DEFAULT_LOG_LEVEL).upper())
    if not _logging_configured:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
        logger.propagate = False
        _logging_configured = True
    return logger


def resolve_output_dir(out: str = None) -> Path:
    """Return the output directory, creating it if needed."""
    path = Path(out or DEFAULT_OUTPUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def get_config_status() -> dict:
    """Get the effective configuration (environment defaults and simulation constants)."""
    return {
        "defaults": {
            "seed": DEFAULT_SEED,
            "threads": DEFAULT_THREADS,
            "output_dir": DEFAULT_OUTPUT_DIR,
            "log_level": DEFAULT_LOG_LEVEL,
            "guard": DEFAULT_GUARD,
        },
        "binomial": {
            "respondents": BINOMIAL_RESPONDENTS,
            "subpopulations": BINOMIAL_SUBPOPULATIONS,
            "total_population": BINOMIAL_TOTAL_POPULATION,
            "size_bounds": list(BINOMIAL_SIZE_BOUNDS),
            "degree_bounds": list(BINOMIAL_DEGREE_BOUNDS),
            "exponent": BINOMIAL_EXPONENT,
        },
        "sbm": {
            "nodes": SBM_NODES,
            "groups": SBM_GROUPS,
            "within_range": list(SBM_WITHIN_RANGE),
            "between": SBM_BETWEEN,
        },
        "env_file_loaded": any(key.startswith("SCALEUP_") for key in os.environ),
    }
