"""
Tests for closed-form Wiener filters and the learned linear denoiser.
"""

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from analysis.wiener_lab import (
    FrequencyFilter,
    LinearFit,
    SpectrumStats,
    WienerLabConfig,
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
from utils.errors import ConfigError, DimensionError, DomainError, ParameterError, TrainingError


def test_wiener_filter_hand_values():
    stats = SpectrumStats(np.array([[3.0, 1.0], [0.0, 0.0]]), np.array([[1.0, 1.0], [1.0, 0.0]]))
    response = wiener_filter(stats).response[0]
    assert response == pytest.approx(np.array([[0.75, 0.5], [0.0, 0.0]]))


def test_per_sample_wiener_of_a_sinusoid_matches_explicit_dft():
    size, amplitude, noise = 8, 0.5, 10.0
    u, v = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    sample = amplitude * np.cos(2 * np.pi * (1 * u + 2 * v) / size)

    expected = np.zeros((size, size))
    for k1 in range(size):
        for k2 in range(size):
            coefficient = np.sum(sample * np.exp(-2j * np.pi * (k1 * u + k2 * v) / size))
            power = abs(coefficient) ** 2
            expected[k1, k2] = power / (power + noise)

    response = per_sample_wiener(sample, noise).response
    assert response.shape == (1, size, size)
    assert response[0] == pytest.approx(expected, abs=1e-6)
    # only the two conjugate bins carry energy, each |A·HW/2|²
    peak = (amplitude * size * size / 2) ** 2
    assert response[0, 1, 2] == pytest.approx(peak / (peak + noise))
    assert response[0, 7, 6] == pytest.approx(peak / (peak + noise))
    assert np.count_nonzero(response[0] > 1e-9) == 2


def test_wiener_filter_is_bounded_and_monotone(rng):
    signal = rng.uniform(0, 10, (2, 6, 6))
    noise = rng.uniform(0.1, 5, (2, 6, 6))
    base = wiener_filter(SpectrumStats(signal, noise)).response
    assert np.all((base >= 0) & (base <= 1))
    assert np.all(wiener_filter(SpectrumStats(signal * 2, noise)).response >= base)
    assert np.all(wiener_filter(SpectrumStats(signal, noise * 2)).response <= base)


def test_spectrum_stats_rejects_bad_values():
    with pytest.raises(DomainError):
        SpectrumStats(-np.ones((4, 4)), np.ones((4, 4)))
    with pytest.raises(DomainError):
        SpectrumStats(np.full((4, 4), np.inf), np.ones((4, 4)))
    with pytest.raises(DomainError):
        FrequencyFilter(np.full((4, 4), 1.5))


def test_noiseless_per_sample_filter_passes_everything(rng):
    sample = rng.standard_normal((5, 5))
    filt = per_sample_wiener(sample, 0.0)
    power = np.abs(np.fft.fft2(sample)) ** 2
    assert np.all(filt.response[0][power > 0] == 1.0)
    assert np.allclose(apply_filter(sample, filt), sample)


def test_apply_filter_identity_zero_and_linearity(rng):
    a, b = rng.standard_normal((2, 3, 6, 6))
    ones = FrequencyFilter(np.ones((3, 6, 6)))
    zeros = FrequencyFilter(np.zeros((3, 6, 6)))
    half = FrequencyFilter(np.full((3, 6, 6), 0.5))

    assert np.allclose(apply_filter(a, ones), a)
    assert np.allclose(apply_filter(a, zeros), 0.0)
    assert np.allclose(apply_filter(2 * a - b, half), 2 * apply_filter(a, half) - apply_filter(b, half))
    with pytest.raises(DimensionError):
        apply_filter(a[:, :5], ones)


def test_kernel_response_of_delta_is_all_ones():
    kernel = np.zeros((2, 5, 5))
    kernel[:, 2, 2] = 1.0
    assert np.allclose(kernel_response(kernel, 7, 9), 1.0)


def test_kernel_response_matches_circular_correlation(rng):
    kernel = rng.standard_normal((1, 3, 3))
    image = rng.standard_normal((1, 6, 6))
    padded = F.pad(torch.from_numpy(image)[None], (1, 1, 1, 1), mode="circular")
    direct = F.conv2d(padded, torch.from_numpy(kernel)[:, None]).numpy()[0]
    spectral = np.real(np.fft.ifft2(kernel_response(kernel, 6, 6) * np.fft.fft2(image)))
    assert np.allclose(direct, spectral)


def test_relative_l2_error_edge_cases():
    assert relative_l2_error(np.ones(4), np.ones(4)) == 0.0
    with pytest.raises(DomainError):
        relative_l2_error(np.ones(4), np.zeros(4))
    with pytest.raises(DimensionError):
        relative_l2_error(np.ones(4), np.ones(5))


def test_fit_validates_arguments():
    pairs, _ = stationary_gaussian_pairs(2, 5, 5)
    with pytest.raises(ParameterError):
        fit_linear_denoiser(pairs, 4, 10, 0.01)
    with pytest.raises(ParameterError):
        fit_linear_denoiser(pairs, 3, -1, 0.01)
    with pytest.raises(ParameterError):
        fit_linear_denoiser(pairs, 3, 10, 0.0)
    with pytest.raises(ConfigError):
        fit_linear_denoiser([], 3, 10, 0.01)


def test_zero_steps_returns_delta_kernel():
    pairs, _ = stationary_gaussian_pairs(3, 5, 5)
    fit = fit_linear_denoiser(pairs, 3, 0, 0.01)
    expected = np.zeros((1, 3, 3))
    expected[0, 1, 1] = 1.0
    assert np.array_equal(fit.kernel, expected)
    assert fit.history == []


def test_noiseless_pairs_keep_identity_filter():
    pairs, _ = stationary_gaussian_pairs(8, 7, 7, noise_std=0.0)
    fit = fit_linear_denoiser(pairs, 5, 20, 0.01)
    assert fit.final_loss == pytest.approx(0.0, abs=1e-20)
    assert np.allclose(fit.response(7, 7), 1.0)


def test_fit_lowers_loss():
    pairs, _ = stationary_gaussian_pairs(64, 9, 9, seed=3)
    fit = fit_linear_denoiser(pairs, 5, 60, 0.02)
    assert fit.history[-1] < fit.history[0]


def test_divergent_fit_raises():
    pairs, _ = stationary_gaussian_pairs(2, 5, 5)
    pairs[0] = (np.full_like(pairs[0][0], np.nan), pairs[0][1])
    with pytest.raises(TrainingError):
        fit_linear_denoiser(pairs, 3, 5, 0.01)


def test_stationary_pairs_spectrum():
    pairs, stats = stationary_gaussian_pairs(400, 8, 8, correlation=1.5, noise_std=0.3, seed=1)
    clean = np.stack([c for _, c in pairs])
    empirical = np.mean(np.abs(np.fft.fft2(clean)) ** 2, axis=0)
    assert relative_l2_error(empirical, stats.signal_power) < 0.15
    assert np.allclose(stats.noise_power, 0.09 * 64)


def test_gap_bound_values():
    assert wiener_gap_bound(1.0) == 0.0
    assert wiener_gap_bound(4.0) == pytest.approx(1.0 / 3.0)
    with pytest.raises(ParameterError):
        wiener_gap_bound(0.5)


@pytest.mark.parametrize("rho", [1.0, 2.0, 4.0, 16.0])
def test_domain_gap_stays_under_bound(rho, rng):
    _, stats = stationary_gaussian_pairs(1, 9, 9, correlation=2.0, noise_std=0.5)
    factors = np.exp(rng.uniform(-np.log(rho), np.log(rho), stats.signal_power.shape))
    assert wiener_gap(stats, stats.scaled(rho)) <= wiener_gap_bound(rho) + 1e-12
    assert wiener_gap(stats, stats.scaled(factors)) <= wiener_gap_bound(rho) + 1e-12


def test_run_wiener_lab_with_given_fit():
    cfg = WienerLabConfig(count=4, size=7, kernel_size=5, steps=0)
    delta = np.zeros((1, 5, 5))
    delta[0, 2, 2] = 1.0
    result = run_wiener_lab(cfg, fit=LinearFit(delta, 0.0))
    assert result.relative_error > 0
    assert set(result.summary()) == {
        "relative_l2_error", "final_mse", "mean_per_sample_gap", "domain_gap", "domain_gap_bound"
    }
    assert result.domain_gap <= result.domain_gap_bound


@pytest.mark.slow
def test_learned_filter_converges_to_wiener():
    result = run_wiener_lab(WienerLabConfig())
    assert result.relative_error <= 0.1
