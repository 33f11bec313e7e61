"""
Reconstruction quality metrics: PSNR over the full cube and band-averaged SSIM.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from skimage.metrics import structural_similarity

from config import PSNR_CAP_DB
from utils.errors import MetricError
from utils.helpers import as_numpy

logger = logging.getLogger("sfsci.metrics")

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _pair(xhat, x) -> Tuple[np.ndarray, np.ndarray]:
    xhat = as_numpy(xhat).astype(np.float64)
    x = as_numpy(x).astype(np.float64)
    if xhat.shape != x.shape:
        raise MetricError(f"shape mismatch: {xhat.shape} vs {x.shape}")
    return xhat, x


def psnr(xhat, x, peak: float = 1.0) -> float:
    """
    Peak signal-to-noise ratio in dB over the full cube.

    A perfect reconstruction is capped at ``PSNR_CAP_DB``.
    """
    xhat, x = _pair(xhat, x)
    mse = float(np.mean((xhat - x) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(peak ** 2 / mse), PSNR_CAP_DB))


def ssim(xhat, x, peak: float = 1.0) -> float:
    """
    Gaussian-windowed SSIM (11x11, sigma 1.5) per band, averaged over bands.

    Cubes are channels-first (B, H, W); a 2-D input is treated as one band.
    """
    xhat, x = _pair(xhat, x)
    if xhat.ndim == 2:
        xhat, x = xhat[None], x[None]
    height, width = x.shape[-2:]
    if height < SSIM_WINDOW or width < SSIM_WINDOW:
        raise MetricError(
            f"SSIM window {SSIM_WINDOW}x{SSIM_WINDOW} larger than image {height}x{width}"
        )

    scores = [
        structural_similarity(
            a, b,
            data_range=peak,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
        )
        for a, b in zip(xhat.reshape(-1, height, width), x.reshape(-1, height, width))
    ]
    return float(np.mean(scores))


@dataclass
class MetricsReport:
    """Per-scene PSNR/SSIM and their means."""

    per_scene: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([p for p, _ in self.per_scene])) if self.per_scene else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([s for _, s in self.per_scene])) if self.per_scene else float("nan")

    def to_dict(self) -> dict:
        return {
            "per_scene": [{"psnr": p, "ssim": s} for p, s in self.per_scene],
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
        }


def score_scenes(reconstructions: Sequence, references: Sequence, peak: float = 1.0) -> MetricsReport:
    """Build a MetricsReport from paired reconstructions and ground truth."""
    if len(reconstructions) != len(references):
        raise MetricError(
            f"{len(reconstructions)} reconstructions for {len(references)} references"
        )
    report = MetricsReport()
    for xhat, x in zip(reconstructions, references):
        report.per_scene.append((psnr(xhat, x, peak), ssim(xhat, x, peak)))
    logger.debug(f"Scored {len(report.per_scene)} scenes: {report.mean_psnr:.2f} dB")
    return report
