"""
Wiener lab: closed-form frequency-domain Wiener filters and the check that a
bias-free linear convolutional denoiser trained by MSE converges to them.

All spectra use the unnormalized DFT of ``numpy.fft.fft2``: white noise of
variance σ² on an H×W image has noise power σ²·H·W at every bin. Arrays are
per-channel, shape (C, H, W).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from tqdm import tqdm

from config import SHOW_PROGRESS
from training.slow_learning import make_scheduler
from utils.errors import ConfigError, DimensionError, DomainError, ParameterError, TrainingError
from utils.helpers import as_numpy

logger = logging.getLogger("sfsci.wiener")


def _channels(array) -> np.ndarray:
    array = np.asarray(as_numpy(array), dtype=np.float64)
    return array[None] if array.ndim == 2 else array


@dataclass
class SpectrumStats:
    """Second-order statistics E|x̂|² and E|ε̂|² per channel and frequency bin."""

    signal_power: np.ndarray
    noise_power: np.ndarray

    def __post_init__(self):
        self.signal_power = _channels(self.signal_power)
        self.noise_power = np.broadcast_to(_channels(self.noise_power), self.signal_power.shape).copy()
        for name in ("signal_power", "noise_power"):
            values = getattr(self, name)
            if not np.all(np.isfinite(values)):
                raise DomainError(f"{name} contains non-finite values")
            if np.any(values < 0):
                raise DomainError(f"{name} must be nonnegative")

    def scaled(self, factor) -> "SpectrumStats":
        """Same noise, signal power multiplied by ``factor`` (scalar or per-bin array)."""
        return SpectrumStats(self.signal_power * factor, self.noise_power)


@dataclass
class FrequencyFilter:
    """Real per-channel frequency response with values in [0, 1]."""

    response: np.ndarray

    def __post_init__(self):
        self.response = _channels(self.response)
        if np.any(self.response < 0) or np.any(self.response > 1):
            raise DomainError("filter response must lie in [0, 1]")

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.response.shape


def _ratio(signal: np.ndarray, noise: np.ndarray) -> np.ndarray:
    denom = signal + noise
    out = np.zeros_like(denom)
    np.divide(signal, denom, out=out, where=denom > 0)
    return np.clip(out, 0.0, 1.0)


def wiener_filter(stats: SpectrumStats) -> FrequencyFilter:
    """Ĥ_w = S / (S + N) per bin; bins with S = N = 0 pass nothing."""
    return FrequencyFilter(_ratio(stats.signal_power, stats.noise_power))


def per_sample_wiener(sample, noise_power) -> FrequencyFilter:
    """
    Optimal filter for one specific sample: |x̂|² / (|x̂|² + N).

    Args:
        sample: Clean image(s), (H, W) or (C, H, W)
        noise_power: Known noise power spectrum, broadcastable to the sample

    Returns:
        FrequencyFilter of the sample's shape
    """
    sample = _channels(sample)
    if not np.all(np.isfinite(sample)):
        raise DomainError("sample contains non-finite values")
    power = np.abs(np.fft.fft2(sample)) ** 2
    noise = np.broadcast_to(_channels(noise_power), power.shape)
    if np.any(noise < 0):
        raise DomainError("noise_power must be nonnegative")
    return FrequencyFilter(_ratio(power, noise))


def apply_filter(image, filt: FrequencyFilter) -> np.ndarray:
    """Real part of ifft2(response · fft2(image)), per channel."""
    data = as_numpy(image)
    squeeze = data.ndim == 2
    data = _channels(data)
    if data.shape != filt.shape:
        raise DimensionError(f"image shape {data.shape} does not match filter shape {filt.shape}")
    out = np.real(np.fft.ifft2(filt.response * np.fft.fft2(data)))
    return out[0] if squeeze else out


def kernel_response(kernel, height: int, width: int) -> np.ndarray:
    """
    Exact frequency response of a circular cross-correlation kernel.

    A (C, k, k) kernel applied as ``conv2d`` with circular padding k//2
    computes out[u] = Σ_j w[j] x[u + j − c]; its transfer function is the DFT
    of the kernel flipped about its center and wrapped onto the H×W grid.

    Returns:
        Complex array (C, height, width)
    """
    kernel = _channels(kernel)
    channels, kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2
    rows = (ch - np.arange(kh)) % height
    cols = (cw - np.arange(kw)) % width

    impulse = np.zeros((channels, height, width))
    for c in range(channels):
        np.add.at(impulse[c], (rows[:, None], cols[None, :]), kernel[c])
    return np.fft.fft2(impulse)


def relative_l2_error(learned, reference) -> float:
    """‖learned − reference‖₂ / ‖reference‖₂ over every bin and channel."""
    learned = np.asarray(learned)
    reference = np.asarray(reference)
    if learned.shape != reference.shape:
        raise DimensionError(f"shape mismatch: {learned.shape} vs {reference.shape}")
    norm = np.linalg.norm(reference)
    if norm == 0:
        raise DomainError("reference response is identically zero")
    return float(np.linalg.norm(learned - reference) / norm)


@dataclass
class LinearFit:
    kernel: np.ndarray
    final_loss: float
    history: List[float] = field(default_factory=list)

    def response(self, height: int, width: int) -> np.ndarray:
        return kernel_response(self.kernel, height, width)


def _linear_denoise(x: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    pad = weight.shape[-1] // 2
    return F.conv2d(F.pad(x, (pad, pad, pad, pad), mode="circular"), weight, groups=x.shape[1])


def fit_linear_denoiser(
    pairs: Sequence[Tuple[np.ndarray, np.ndarray]],
    kernel_size: int,
    steps: int,
    lr: float,
    schedule: str = "cosine_annealing"
) -> LinearFit:
    """
    Train a bias-free, activation-free per-channel convolution by MSE.

    The kernel starts as the identity (a centered delta) and is fit with
    full-batch Adam. Convolution is circular, so the learned transfer function
    is exactly ``kernel_response``.

    Args:
        pairs: (noisy, clean) images, each (H, W) or (C, H, W)
        kernel_size: Odd kernel width, at most the image size
        steps: Gradient steps
        lr: Adam learning rate
        schedule: "cosine_annealing" or "constant"

    Returns:
        LinearFit with the (C, k, k) kernel, final loss and per-step history
    """
    if not pairs:
        raise ConfigError("pairs", "need at least one (noisy, clean) pair")
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ParameterError(f"kernel_size must be odd and positive, got {kernel_size}")
    if steps < 0:
        raise ParameterError(f"steps must be >= 0, got {steps}")
    if not lr > 0:
        raise ParameterError(f"lr must be > 0, got {lr}")

    noisy = torch.from_numpy(np.stack([_channels(n) for n, _ in pairs]))
    clean = torch.from_numpy(np.stack([_channels(c) for _, c in pairs]))
    if noisy.shape != clean.shape:
        raise DimensionError(f"noisy {tuple(noisy.shape)} and clean {tuple(clean.shape)} differ")
    channels, height, width = noisy.shape[1:]
    if kernel_size // 2 > min(height, width):
        raise ParameterError(f"kernel_size {kernel_size} too large for {height}x{width} images")

    weight = torch.zeros(channels, 1, kernel_size, kernel_size, dtype=torch.float64)
    weight[:, 0, kernel_size // 2, kernel_size // 2] = 1.0
    weight.requires_grad_(True)
    optimizer = torch.optim.Adam([weight], lr=lr)
    scheduler = make_scheduler(optimizer, schedule, steps)

    history: List[float] = []
    for step in tqdm(range(steps), desc="wiener-fit", disable=not SHOW_PROGRESS):
        optimizer.zero_grad()
        loss = F.mse_loss(_linear_denoise(noisy, weight), clean)
        if not torch.isfinite(loss):
            raise TrainingError(
                "linear denoiser diverged",
                diagnostics={"step": step, "lr": lr, "last_loss": history[-1] if history else None},
                history=history,
                last_good_state={"kernel": weight.detach()[:, 0].clone().numpy()}
            )
        loss.backward()
        optimizer.step()
        scheduler.step()
        history.append(float(loss))
        if step % 100 == 0:
            logger.debug(f"wiener-fit step {step}: mse={history[-1]:.6g}")

    with torch.no_grad():
        final = float(F.mse_loss(_linear_denoise(noisy, weight), clean))
    kernel = weight.detach()[:, 0].numpy().copy()
    logger.info(f"Linear denoiser fit: {steps} steps, final mse={final:.6g}")
    return LinearFit(kernel, final, history)


def stationary_gaussian_pairs(
    count: int,
    height: int,
    width: int,
    channels: int = 1,
    correlation: float = 2.0,
    noise_std: float = 0.5,
    seed: int = 0
) -> Tuple[List[Tuple[np.ndarray, np.ndarray]], SpectrumStats]:
    """
    Stationary Gaussian images with a Gaussian power spectrum plus white noise.

    Clean images are white noise shaped in frequency by A(k) with
    A²(k) = exp(−|k|² / (2·correlation²)), |k| in DFT bins, so their exact
    power spectrum is A²(k)·H·W. Noise power is noise_std²·H·W.

    Returns:
        ([(noisy, clean)] with (C, H, W) arrays, exact SpectrumStats)
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if not correlation > 0 or noise_std < 0:
        raise ParameterError("correlation must be > 0 and noise_std >= 0")

    k1 = np.fft.fftfreq(height, d=1.0 / height)
    k2 = np.fft.fftfreq(width, d=1.0 / width)
    u, v = np.meshgrid(k1, k2, indexing="ij")
    amplitude_sq = np.exp(-(u ** 2 + v ** 2) / (2.0 * correlation ** 2))

    rng = np.random.default_rng(seed)
    white = rng.standard_normal((count, channels, height, width))
    clean = np.real(np.fft.ifft2(np.sqrt(amplitude_sq) * np.fft.fft2(white)))
    noisy = clean + noise_std * rng.standard_normal(clean.shape)

    stats = SpectrumStats(
        np.broadcast_to(amplitude_sq * height * width, (channels, height, width)),
        np.full((channels, height, width), noise_std ** 2 * height * width)
    )
    return list(zip(noisy, clean)), stats


def wiener_gap(source: SpectrumStats, target: SpectrumStats) -> float:
    """‖Ĥ_w(source) − Ĥ_w(target)‖∞."""
    a = wiener_filter(source).response
    b = wiener_filter(target).response
    if a.shape != b.shape:
        raise DimensionError(f"spectra shapes differ: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))


def wiener_gap_bound(rho: float) -> float:
    """
    Worst-case Wiener gap when target signal power is the source's times a
    factor in [1/rho, rho] at every bin, with equal noise: (√ρ − 1)/(√ρ + 1).
    """
    if rho < 1:
        raise ParameterError(f"rho must be >= 1, got {rho}")
    root = np.sqrt(rho)
    return float((root - 1.0) / (root + 1.0))


@dataclass(frozen=True)
class WienerLabConfig:
    count: int = 2000
    size: int = 15
    channels: int = 1
    kernel_size: int = 15
    correlation: float = 2.0
    noise_std: float = 0.5
    steps: int = 600
    lr: float = 0.02
    rho: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.kernel_size % 2 == 0:
            raise ConfigError("wiener.kernel_size", "must be odd")
        if self.kernel_size // 2 > self.size:
            raise ConfigError("wiener.kernel_size", "must not exceed the image size")
        if self.rho < 1:
            raise ConfigError("wiener.rho", "must be >= 1")


@dataclass
class WienerLabResult:
    learned: np.ndarray
    closed_form: FrequencyFilter
    relative_error: float
    final_loss: float
    per_sample_gap: float
    domain_gap: float
    domain_gap_bound: float

    def summary(self) -> dict:
        return {
            "relative_l2_error": self.relative_error,
            "final_mse": self.final_loss,
            "mean_per_sample_gap": self.per_sample_gap,
            "domain_gap": self.domain_gap,
            "domain_gap_bound": self.domain_gap_bound,
        }


def run_wiener_lab(cfg: WienerLabConfig, fit: Optional[LinearFit] = None) -> WienerLabResult:
    """
    Fit the linear denoiser on stationary Gaussian data and compare it with
    the closed-form filter, the per-sample filters and a shifted target domain.
    """
    pairs, stats = stationary_gaussian_pairs(
        cfg.count, cfg.size, cfg.size, cfg.channels, cfg.correlation, cfg.noise_std, cfg.seed
    )
    fit = fit if fit is not None else fit_linear_denoiser(pairs, cfg.kernel_size, cfg.steps, cfg.lr)
    learned = fit.response(cfg.size, cfg.size)
    closed = wiener_filter(stats)
    error = relative_l2_error(learned, closed.response)

    # Per-sample filters over a handful of clean samples.
    gaps = [
        float(np.max(np.abs(per_sample_wiener(clean, stats.noise_power).response - closed.response)))
        for _, clean in pairs[:32]
    ]

    target = stats.scaled(cfg.rho)
    gap = wiener_gap(stats, target)
    bound = wiener_gap_bound(cfg.rho)
    logger.info(
        f"Wiener lab: relative L2 error {error:.4f}, domain gap {gap:.4f} (bound {bound:.4f})"
    )
    return WienerLabResult(learned, closed, error, fit.final_loss, float(np.mean(gaps)), gap, bound)
