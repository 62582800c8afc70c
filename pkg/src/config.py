"""
Configuration loading

Defaults live in configs/config.yaml; the worker count can also come from
the MEDBOOT_WORKERS environment variable (a .env file is honoured).
"""

import logging
import os
from pathlib import Path
from typing import Dict, Optional

import yaml
from dotenv import load_dotenv

from src.exceptions import InvalidConfig

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).parent.parent
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "configs" / "config.yaml"
WORKERS_ENV_VAR = "MEDBOOT_WORKERS"

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def load_config(config_path: Optional[str] = None) -> Dict:
    """
    Load the YAML configuration

    Args:
        config_path: Path to a YAML file; defaults to configs/config.yaml

    Returns:
        Configuration dictionary
    """
    path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH
    if not path.exists():
        raise InvalidConfig(f"Config file not found: {path}")

    with open(path, 'r') as f:
        config = yaml.safe_load(f) or {}

    if not isinstance(config, dict):
        raise InvalidConfig(f"Config file {path} must contain a mapping")

    logger.debug(f"Loaded configuration from {path}")
    return config


def default_workers() -> int:
    """
    Advisory worker count for the bootstrap engine

    Results never depend on this value.
    """
    load_dotenv()
    raw = os.getenv(WORKERS_ENV_VAR)
    if raw is None or raw.strip() == "":
        return 1
    try:
        workers = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {WORKERS_ENV_VAR}={raw!r}")
        return 1
    return max(1, workers)


def setup_logging(level: str = "INFO") -> None:
    """Configure root logging the same way for every entry point"""
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT
    )
