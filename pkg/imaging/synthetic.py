"""
Synthetic hyperspectral scenes with a controllable spectral domain shift.

Each scene is a low-rank mixture: ``spectral_rank`` smooth nonnegative
abundance maps, each paired with a spectral signature. Smooth low-rank
signatures give strongly correlated bands (the source domain); more,
rougher signatures give weakly correlated bands (the target domain).
"""

import logging
from dataclasses import asdict, dataclass
from typing import List

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_filter1d

from utils.errors import ConfigError

logger = logging.getLogger("sfsci.data")


@dataclass(frozen=True)
class SyntheticConfig:
    height: int = 64
    width: int = 64
    bands: int = 8
    spatial_smoothness: float = 4.0
    spectral_rank: int = 2
    spectral_smoothness: float = 3.0
    count: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("height", "width", "bands", "spectral_rank", "count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"data.{name}", "must be >= 1")
        if self.spectral_rank > self.bands:
            raise ConfigError(
                "data.spectral_rank",
                f"must be <= bands ({self.bands}), got {self.spectral_rank}"
            )
        if self.spatial_smoothness <= 0 or self.spectral_smoothness <= 0:
            raise ConfigError("data.smoothness", "spatial and spectral smoothness must be positive")
        if self.seed < 0:
            raise ConfigError("data.seed", "must be an unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


def _unit_range(values: np.ndarray, axis) -> np.ndarray:
    low = values.min(axis=axis, keepdims=True)
    high = values.max(axis=axis, keepdims=True)
    return (values - low) / np.maximum(high - low, 1e-12)


def _scene(cfg: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
    rank = cfg.spectral_rank

    fields = rng.standard_normal((rank, cfg.height, cfg.width))
    fields = np.stack([
        gaussian_filter(f, sigma=cfg.spatial_smoothness, mode="wrap") for f in fields
    ])
    abundances = _unit_range(fields, axis=(1, 2))

    signatures = rng.standard_normal((rank, cfg.bands))
    signatures = gaussian_filter1d(signatures, sigma=cfg.spectral_smoothness, axis=1, mode="nearest")
    signatures = _unit_range(signatures, axis=1) if cfg.bands > 1 else np.ones_like(signatures)

    cube = np.einsum("rb,rhw->bhw", signatures, abundances)
    peak = cube.max()
    if peak > 0:
        cube = cube / peak
    return np.clip(cube, 0.0, 1.0).astype(np.float32)


def gen_synthetic(cfg: SyntheticConfig) -> List[np.ndarray]:
    """
    Generate ``cfg.count`` cubes of shape (bands, height, width) in [0, 1].

    Deterministic per ``cfg.seed``.
    """
    rng = np.random.default_rng(cfg.seed)
    cubes = [_scene(cfg, rng) for _ in range(cfg.count)]
    logger.info(
        f"Generated {len(cubes)} scenes {cfg.bands}x{cfg.height}x{cfg.width} "
        f"(rank={cfg.spectral_rank}, spectral_smoothness={cfg.spectral_smoothness})"
    )
    return cubes


def mean_band_correlation(cubes: List[np.ndarray]) -> float:
    """Mean off-diagonal Pearson correlation between bands, averaged over scenes."""
    scores = []
    for cube in cubes:
        bands = cube.shape[0]
        if bands < 2:
            continue
        corr = np.corrcoef(cube.reshape(bands, -1))
        corr = np.nan_to_num(corr, nan=1.0)
        off_diagonal = corr[~np.eye(bands, dtype=bool)]
        scores.append(float(off_diagonal.mean()))
    return float(np.mean(scores)) if scores else 1.0
