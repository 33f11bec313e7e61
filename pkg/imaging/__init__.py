"""CASSI sensing, synthetic scenes, metrics and cube storage."""

from .cassi import (
    Measurement,
    SensingConfig,
    add_noise,
    adjoint,
    forward,
    make_mask,
    phi_phiT_diag,
    simulate,
)
from .metrics import MetricsReport, psnr, score_scenes, ssim
from .storage import load_cube, load_dataset, save_cube, save_dataset
from .synthetic import SyntheticConfig, gen_synthetic, mean_band_correlation

__all__ = [
    'Measurement',
    'SensingConfig',
    'add_noise',
    'adjoint',
    'forward',
    'make_mask',
    'phi_phiT_diag',
    'simulate',
    'MetricsReport',
    'psnr',
    'score_scenes',
    'ssim',
    'load_cube',
    'load_dataset',
    'save_cube',
    'save_dataset',
    'SyntheticConfig',
    'gen_synthetic',
    'mean_band_correlation'
]
