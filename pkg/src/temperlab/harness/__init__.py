"""Configuration, experiment drivers, property battery and CLI."""

from .cli import main
from .config import CONFIG_SCHEMA, validate_config
from .io import RESULT_SCHEMA, SCHEMA_VERSION

__all__ = ["main", "CONFIG_SCHEMA", "validate_config", "RESULT_SCHEMA", "SCHEMA_VERSION"]
