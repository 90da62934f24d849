"""
Configuration settings for the memristor learning simulator.
"""

import os
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

from dotenv import load_dotenv, dotenv_values

from src.utils.errors import ConfigError

# Load environment variables
load_dotenv()

# Configure logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

# Application Settings
OUTPUT_DIR = os.environ.get("MEMNET_OUTPUT_DIR", "results")
DEFAULT_THREADS = int(os.environ.get("MEMNET_THREADS", str(os.cpu_count() or 1)))

# BMS device population (uniform ranges, fixed r_max)
BMS_BETA_RANGE = (0.8, 1.0)
BMS_V_THRESHOLD_RANGE = (0.05, 0.1)
BMS_R_MIN_RANGE = (50.0, 100.0)
BMS_R_MAX = 5000.0

# BMS training protocol
BMS_V_READ = 0.0001
BMS_V_WRITE = -0.2
BMS_WRITE_SUBSTEPS = 5
BMS_WRITE_DURATION = 5.0

# BCM device parameter set; only r_min is drawn per device
BCM_A = 0.1494
BCM_B = 1.6182
BCM_V_T0 = 0.915
BCM_V_T1 = 1.3048
BCM_V_TH0 = 4.7404
BCM_V_TH1 = 2.4629
BCM_MU = 1e-16
BCM_D = 1e-8
BCM_R_MIN_RANGE = (500.0, 1000.0)
BCM_R_MAX = 1e4

# BCM training protocol (seconds)
BCM_V_READ = 0.0001
BCM_V_WRITE = -5.0
BCM_WRITE_SUBSTEPS = 5
BCM_WRITE_DURATION = 1e-3

# Learning loop caps
MAX_CORRECTIONS = 80
MAX_TRAINING_STEPS = 1000

# Equal-initial-resistance variant
EQUAL_R_INITIAL = 100.0
EQUAL_R_V_WRITE_RANGE = (0.15, 0.3)

# Toy model
TOY_DELTA = 0.01


def set_log_level(level: str) -> None:
    """Change the root log level after import (used by the --log-level flag)."""
    numeric = getattr(logging, level.upper(), None)
    if not isinstance(numeric, int):
        raise ConfigError(f"Unknown log level: {level}")
    logging.getLogger().setLevel(numeric)


def load_config_file(path: Union[str, Path], allowed_keys: Iterable[str]) -> Dict[str, str]:
    """
    Read a flat ``key = value`` configuration file.

    Args:
        path: Location of the file
        allowed_keys: Keys the caller understands; anything else is rejected

    Returns:
        Mapping of keys to raw string values (empty values are dropped)
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")

    values = dotenv_values(path)
    allowed = set(allowed_keys)
    unknown = sorted(key for key in values if key not in allowed)
    if unknown:
        logger.error(f"Unknown keys in {path}: {', '.join(unknown)}")
        raise ConfigError(f"Unknown config key(s) in {path}: {', '.join(unknown)}")

    logger.debug(f"Loaded {len(values)} settings from {path}")
    return {key: value for key, value in values.items() if value not in (None, "")}


def get_output_dir(override: Optional[str] = None) -> Path:
    """Resolve the output directory, falling back to MEMNET_OUTPUT_DIR."""
    return Path(override or os.environ.get("MEMNET_OUTPUT_DIR", OUTPUT_DIR))
