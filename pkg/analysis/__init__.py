"""Frequency-domain analysis of linear denoisers."""

from .wiener_lab import (
    FrequencyFilter,
    LinearFit,
    SpectrumStats,
    WienerLabConfig,
    WienerLabResult,
    apply_filter,
    fit_linear_denoiser,
    kernel_response,
    per_sample_wiener,
    relative_l2_error,
    run_wiener_lab,
    stationary_gaussian_pairs,
    wiener_filter,
    wiener_gap,
    wiener_gap_bound,
)

__all__ = [
    'FrequencyFilter',
    'LinearFit',
    'SpectrumStats',
    'WienerLabConfig',
    'WienerLabResult',
    'apply_filter',
    'fit_linear_denoiser',
    'kernel_response',
    'per_sample_wiener',
    'relative_l2_error',
    'run_wiener_lab',
    'stationary_gaussian_pairs',
    'wiener_filter',
    'wiener_gap',
    'wiener_gap_bound'
]
