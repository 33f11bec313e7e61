"""
CASSI sensing operator.

A cube ``x`` of shape ``(B, H, W)`` (or batched ``(N, B, H, W)``) is masked by a
binary coded aperture ``M`` of shape ``(H, W)``, band ``i`` is shifted by
``d*i`` columns toward increasing column index, and all bands are summed on a
detector of width ``W + d*(B-1)``. Shifted pixels falling off the detector
contribute nothing (zero padding, no wraparound).
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import torch
import torch.nn.functional as F

from utils.errors import ConfigError, DimensionError, DomainError, ParameterError
from utils.helpers import make_generator

logger = logging.getLogger("sfsci.sensing")

NOISE_MODELS = ("none", "shot")


@dataclass(frozen=True)
class SensingConfig:
    """Shift step, sensor noise model and noise seed."""

    shift: int = 1
    noise: str = "none"
    bits: int = 11
    seed: int = 0

    def __post_init__(self):
        if self.shift < 0:
            raise ConfigError("sensing.shift", f"must be >= 0, got {self.shift}")
        if self.noise not in NOISE_MODELS:
            raise ConfigError("sensing.noise", f"must be one of {NOISE_MODELS}, got '{self.noise}'")
        if self.noise == "shot" and self.bits < 1:
            raise ConfigError("sensing.bits", f"must be >= 1 for shot noise, got {self.bits}")
        if self.seed < 0:
            raise ConfigError("sensing.seed", "must be an unsigned integer")


@dataclass(frozen=True)
class Measurement:
    """
    Coded snapshot with the geometry needed to invert it.

    ``data`` has shape ``(H, W + shift*(bands-1))`` or a batch of those.
    """

    data: torch.Tensor
    shift: int
    bands: int
    width: int = field(init=False)

    def __post_init__(self):
        if self.bands < 1:
            raise DimensionError(f"bands must be >= 1, got {self.bands}")
        width = self.data.shape[-1] - self.shift * (self.bands - 1)
        if width < 1:
            raise DimensionError(
                f"measurement width {self.data.shape[-1]} too small for "
                f"shift={self.shift}, bands={self.bands}"
            )
        object.__setattr__(self, "width", width)

    @property
    def height(self) -> int:
        return self.data.shape[-2]


def measurement_width(width: int, shift: int, bands: int) -> int:
    return width + shift * (bands - 1)


def _check_mask(mask: torch.Tensor) -> None:
    if mask.dim() != 2:
        raise DimensionError(f"mask must be 2-D (H, W), got shape {tuple(mask.shape)}")


def make_mask(height: int, width: int, density: float = 0.5, seed: int = 0) -> torch.Tensor:
    """
    Draw a binary coded aperture.

    Args:
        height: Mask rows
        width: Mask columns
        density: Probability that an entry is open (1)
        seed: Generator seed

    Returns:
        Float tensor of shape (height, width) with entries in {0, 1}
    """
    if height < 1 or width < 1:
        raise DimensionError(f"mask shape must be positive, got ({height}, {width})")
    if not 0.0 <= density <= 1.0:
        raise ParameterError(f"mask density must lie in [0, 1], got {density}")

    generator = make_generator(seed)
    draws = torch.rand(height, width, generator=generator)
    mask = (draws < density).to(torch.float32)
    logger.debug(f"Mask {height}x{width} density={density} seed={seed}: {int(mask.sum())} open")
    return mask


def forward(cube: torch.Tensor, mask: torch.Tensor, shift: int) -> torch.Tensor:
    """
    Apply Φ: mask every band, shift band i by ``shift*i`` columns, sum.

    Args:
        cube: (..., B, H, W) tensor
        mask: (H, W) binary mask
        shift: Column shift per band

    Returns:
        (..., H, W + shift*(B-1)) measurement, noiseless
    """
    _check_mask(mask)
    if cube.dim() < 3 or tuple(cube.shape[-2:]) != tuple(mask.shape):
        raise DimensionError(
            f"cube spatial shape {tuple(cube.shape[-2:])} does not match mask {tuple(mask.shape)}"
        )
    bands = cube.shape[-3]
    span = shift * (bands - 1)

    masked = cube * mask.to(cube.dtype)
    measurement = None
    for i in range(bands):
        band = F.pad(masked[..., i, :, :], (shift * i, span - shift * i))
        measurement = band if measurement is None else measurement + band
    return measurement


def adjoint(measurement: torch.Tensor, mask: torch.Tensor, shift: int, bands: int) -> torch.Tensor:
    """
    Apply Φᵀ: read back each band's detector window and re-apply the mask.

    Args:
        measurement: (..., H, W') tensor with W' = W + shift*(bands-1)
        mask: (H, W) binary mask
        shift: Column shift per band
        bands: Number of bands B

    Returns:
        (..., B, H, W) tensor
    """
    _check_mask(mask)
    height, width = mask.shape
    if measurement.shape[-2] != height or measurement.shape[-1] != measurement_width(width, shift, bands):
        raise DimensionError(
            f"measurement shape {tuple(measurement.shape[-2:])} inconsistent with mask "
            f"{tuple(mask.shape)}, shift={shift}, bands={bands}"
        )
    mask = mask.to(measurement.dtype)
    windows = [measurement[..., :, shift * i: shift * i + width] * mask for i in range(bands)]
    return torch.stack(windows, dim=-3)


def phi_phiT_diag(mask: torch.Tensor, shift: int, bands: int) -> torch.Tensor:
    """
    Diagonal of ΦΦᵀ laid out on the measurement plane.

    Entry (u, v) sums ``M(u, v - shift*i)**2`` over the bands covering column v.
    """
    _check_mask(mask)
    if bands < 1:
        raise DimensionError(f"bands must be >= 1, got {bands}")
    squared = (mask * mask).unsqueeze(0).expand(bands, *mask.shape)
    ones = torch.ones_like(mask)
    return forward(squared, ones, shift)


def add_noise(
    measurement: torch.Tensor,
    cfg: SensingConfig,
    generator: Optional[torch.Generator] = None
) -> torch.Tensor:
    """
    Simulate sensor noise.

    Shot noise scales each measurement so that its maximum maps to
    ``2**bits - 1`` photon counts, draws Poisson counts per pixel and scales
    back. An all-zero measurement is returned unchanged.

    Args:
        measurement: (..., H, W') nonnegative tensor
        cfg: Sensing configuration
        generator: Optional generator; defaults to one seeded with ``cfg.seed``

    Returns:
        Noisy measurement of the same shape
    """
    if cfg.noise == "none":
        return measurement
    if bool((measurement < 0).any()):
        raise DomainError("shot noise requires a nonnegative measurement")

    generator = generator if generator is not None else make_generator(cfg.seed)
    full_scale = float(2 ** cfg.bits - 1)

    flat = measurement.reshape(-1, *measurement.shape[-2:])
    peaks = flat.amax(dim=(-2, -1), keepdim=True)
    scale = torch.where(peaks > 0, full_scale / peaks.clamp_min(torch.finfo(flat.dtype).tiny), torch.zeros_like(peaks))

    counts = torch.poisson((flat * scale).detach(), generator=generator)
    noisy = torch.where(peaks > 0, counts / scale.clamp_min(torch.finfo(flat.dtype).tiny), flat)
    return noisy.reshape(measurement.shape)


def simulate(
    cube: torch.Tensor,
    mask: torch.Tensor,
    cfg: SensingConfig,
    generator: Optional[torch.Generator] = None
) -> Measurement:
    """Measure a cube and add the configured noise."""
    bands = cube.shape[-3]
    clean = forward(cube, mask, cfg.shift)
    noisy = add_noise(clean, cfg, generator)
    return Measurement(noisy, cfg.shift, bands)


def unwrap(measurement: Union[Measurement, torch.Tensor]) -> torch.Tensor:
    return measurement.data if isinstance(measurement, Measurement) else measurement
