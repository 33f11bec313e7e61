"""Utility modules for SlowFast-SCI."""

from .logger import setup_logger
from .helpers import format_error_message, retry_on_error
from .cache_manager import ReconstructionCache
from .data_processor import DataProcessor

__all__ = [
    'setup_logger',
    'format_error_message',
    'retry_on_error',
    'ReconstructionCache',
    'DataProcessor'
]
