# Utils module for the half-precision training lab
# This module contains logging, configuration and error definitions

from .logger import setup_logger, get_logger, default_log_file
from .config_loader import load_config, get_config, apply_overrides, save_config, validate_config
from .exceptions import (
    HalfLabError,
    ContractViolationError,
    ArchitectureMismatchError,
    TheoryViolationError,
    ConfigError,
    DatasetError,
    WrongMagicError,
    TruncatedPayloadError,
    CountMismatchError,
    ModelFileError,
    BadMagicError,
    VersionMismatchError,
    PayloadLengthError,
    TrainingInstabilityError,
)

__version__ = '0.1.0'

__all__ = [
    'setup_logger', 'get_logger', 'default_log_file',
    'load_config', 'get_config', 'apply_overrides', 'save_config', 'validate_config',
    'HalfLabError', 'ContractViolationError', 'ArchitectureMismatchError',
    'TheoryViolationError', 'ConfigError', 'DatasetError', 'WrongMagicError',
    'TruncatedPayloadError', 'CountMismatchError', 'ModelFileError', 'BadMagicError',
    'VersionMismatchError', 'PayloadLengthError', 'TrainingInstabilityError',
]
