"""
Configuration settings for SlowFast-SCI.
Centralizes output locations, logging, numeric conventions and exit codes.
Experiment hyperparameters live in pipeline/experiment.py.
"""

import os
from dotenv import load_dotenv
from pathlib import Path

# Load environment variables
load_dotenv()

# ========================================
# APPLICATION SETTINGS
# ========================================
APP_TITLE = "SlowFast-SCI"
APP_VERSION = "1.0.0"
APP_ENV = os.getenv("APP_ENV", "development")
DEBUG_MODE = os.getenv("DEBUG_MODE", "false").lower() == "true"
SHOW_PROGRESS = os.getenv("SHOW_PROGRESS", "true").lower() == "true"

# ========================================
# OUTPUT DIRECTORIES
# ========================================
# SFSCI_OUT overrides the output_dir of every experiment config
OUTPUT_DIR_OVERRIDE = os.getenv("SFSCI_OUT", "")
OUTPUT_DIR = Path(OUTPUT_DIR_OVERRIDE or "outputs")

CACHE_SUBDIR = "cache"
CHECKPOINT_SUBDIR = "checkpoints"
DATA_SUBDIR = "data"

# ========================================
# EXPERIMENT DEFAULTS
# ========================================
DEFAULT_SEED = int(os.getenv("SFSCI_SEED", "0"))
DEFAULT_PRESET = os.getenv("SFSCI_PRESET", "desk")
PRESETS = ("desk", "paper-geometry")

# ========================================
# NUMERIC CONVENTIONS
# ========================================
PSNR_CAP_DB = 99.0
DIAG_EPS = 1e-6
MU_FLOOR = 1e-6

# ========================================
# FILE FORMATS
# ========================================
CUBE_DTYPE = "f32le"
CUBE_ORDER = "brc"
CHECKPOINT_SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"

# ========================================
# EXIT CODES
# ========================================
EXIT_CODES = {
    "ok": 0,
    "error": 1,
    "config": 2,
    "missing_artifact": 3,
    "numeric": 4
}

# ========================================
# LOGGING
# ========================================
LOG_LEVEL = "DEBUG" if DEBUG_MODE else os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_FILE = "sfsci.log"

# ========================================
# VALIDATION
# ========================================
def validate_config():
    """Validate critical configuration settings."""
    errors = []

    if DEFAULT_PRESET not in PRESETS:
        errors.append(f"SFSCI_PRESET must be one of {PRESETS}, got '{DEFAULT_PRESET}'")

    if LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        errors.append(f"LOG_LEVEL '{LOG_LEVEL}' is not a logging level")

    if DEFAULT_SEED < 0:
        errors.append("SFSCI_SEED must be a nonnegative integer")

    if errors:
        raise ValueError(f"Configuration errors:\n" + "\n".join(f"- {e}" for e in errors))

# Validate on import - only warn, don't fail
if __name__ != "__main__":
    try:
        validate_config()
    except ValueError as e:
        import warnings
        warnings.warn(str(e), UserWarning)
