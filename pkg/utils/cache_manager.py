"""
Cache manager for reconstructions of frozen models.
"""

import hashlib
import logging
from pathlib import Path
from typing import Dict, Optional

import torch

from utils.helpers import tensor_fingerprint

logger = logging.getLogger("sfsci.cache")


class ReconstructionCache:
    """Caches model outputs keyed by (model fingerprint, measurement bytes)."""

    def __init__(self, cache_dir: Optional[Path] = None):
        """
        Initialize cache manager.

        Args:
            cache_dir: Directory mirroring the cache as .pt files; memory only when None
        """
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._memory: Dict[str, torch.Tensor] = {}
        self.hits = 0
        self.misses = 0

    def _get_cache_key(self, source: str, measurement: torch.Tensor) -> str:
        """Generate cache key from a model fingerprint and a measurement."""
        key_str = f"{source}:{tensor_fingerprint([measurement])}"
        return hashlib.md5(key_str.encode()).hexdigest()

    def _get_cache_path(self, cache_key: str) -> Path:
        return self.cache_dir / f"{cache_key}.pt"

    def get(self, source: str, measurement: torch.Tensor) -> Optional[torch.Tensor]:
        """
        Retrieve a cached reconstruction.

        Args:
            source: Fingerprint of the model that produced it
            measurement: Input measurement

        Returns:
            Cached tensor or None if not found
        """
        cache_key = self._get_cache_key(source, measurement)
        if cache_key in self._memory:
            self.hits += 1
            return self._memory[cache_key]

        if self.cache_dir:
            cache_path = self._get_cache_path(cache_key)
            if cache_path.exists():
                try:
                    value = torch.load(cache_path, weights_only=True)
                    self._memory[cache_key] = value
                    self.hits += 1
                    return value
                except Exception as e:
                    logger.error(f"Error reading cache {cache_path}: {e}")

        self.misses += 1
        return None

    def set(self, source: str, measurement: torch.Tensor, value: torch.Tensor) -> None:
        """
        Store a reconstruction.

        Args:
            source: Fingerprint of the model that produced it
            measurement: Input measurement
            value: Reconstruction to cache
        """
        cache_key = self._get_cache_key(source, measurement)
        value = value.detach()
        self._memory[cache_key] = value

        if self.cache_dir:
            try:
                torch.save(value, self._get_cache_path(cache_key))
            except OSError as e:
                logger.error(f"Error writing cache: {e}")

    def clear(self) -> int:
        """
        Drop all cached entries.

        Returns:
            Number of entries deleted
        """
        deleted = len(self._memory)
        self._memory.clear()

        if self.cache_dir:
            for cache_file in self.cache_dir.glob("*.pt"):
                try:
                    cache_file.unlink()
                except OSError as e:
                    logger.error(f"Error deleting cache file {cache_file}: {e}")

        logger.info(f"Cleared {deleted} cached reconstructions")
        return deleted

    def get_stats(self) -> dict:
        """Get cache statistics."""
        total_bytes = sum(v.numel() * v.element_size() for v in self._memory.values())
        return {
            'entries': len(self._memory),
            'total_size_mb': round(total_bytes / (1024 * 1024), 2),
            'hits': self.hits,
            'misses': self.misses,
            'persistent': self.cache_dir is not None
        }
