"""
Helper functions shared by the numerical packages and the CLI.
"""

import hashlib
import logging
from typing import Any, Iterable

import numpy as np
import torch
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

logger = logging.getLogger("sfsci.helpers")


def retry_on_error(max_attempts: int = 3, wait_seconds: int = 1):
    """
    Decorator to retry artifact writes on transient filesystem errors.

    Args:
        max_attempts: Maximum number of retry attempts
        wait_seconds: Multiplier for the exponential wait between retries
    """
    return retry(
        retry=retry_if_exception_type(OSError),
        stop=stop_after_attempt(max_attempts),
        wait=wait_exponential(multiplier=wait_seconds, min=0.1, max=5),
        reraise=True
    )


def format_error_message(error: Exception, context: str = "") -> str:
    """
    Format error message for user display.

    Args:
        error: Exception object
        context: Additional context

    Returns:
        Formatted error message
    """
    error_type = type(error).__name__
    error_msg = str(error)

    message = f"Error: {error_type}"
    if context:
        message += f" in {context}"
    if error_msg:
        message += f" - {error_msg}"

    return message


def as_numpy(array: Any) -> np.ndarray:
    """Return a numpy view of a tensor or array-like."""
    if isinstance(array, torch.Tensor):
        return array.detach().cpu().numpy()
    return np.asarray(array)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def tensor_fingerprint(tensors: Iterable[torch.Tensor]) -> str:
    """MD5 over the raw bytes of a sequence of tensors."""
    digest = hashlib.md5()
    for tensor in tensors:
        array = np.ascontiguousarray(as_numpy(tensor))
        digest.update(str(array.shape).encode())
        digest.update(str(array.dtype).encode())
        digest.update(array.tobytes())
    return digest.hexdigest()


def make_generator(seed: int) -> torch.Generator:
    """Seeded CPU generator; every random draw in the library goes through one."""
    return torch.Generator().manual_seed(int(seed))


def ensure_finite(tensor: torch.Tensor) -> bool:
    return bool(torch.isfinite(tensor).all())
