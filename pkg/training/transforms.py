"""
Lattice transforms for the equivariance losses.

Every transform acts on the last two (spatial) axes, identically on every
band, and has an exact inverse.
"""

from dataclasses import dataclass
from typing import Tuple

import torch

from utils.errors import ConfigError

TRANSFORM_KINDS = ("identity", "hflip", "vflip", "rot90", "shift")


@dataclass(frozen=True)
class Transform:
    """One group element. ``amount`` is (k, 0) for rot90 and (du, dv) for shift."""

    kind: str
    amount: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ConfigError("transform.kind", f"must be one of {TRANSFORM_KINDS}, got '{self.kind}'")


@dataclass(frozen=True)
class TransformSpec:
    group: Tuple[str, ...] = ("hflip", "vflip", "rot90", "shift")
    max_shift: int = 4

    def __post_init__(self):
        if not self.group:
            raise ConfigError("tta.transforms.group", "must list at least one transform")
        for kind in self.group:
            if kind not in TRANSFORM_KINDS:
                raise ConfigError("tta.transforms.group", f"unknown transform '{kind}'")
        if self.max_shift < 0:
            raise ConfigError("tta.transforms.max_shift", "must be >= 0")

    def to_dict(self) -> dict:
        return {"group": list(self.group), "max_shift": self.max_shift}

    def check_shape(self, height: int, width: int, field: str = "tta.transforms.group") -> None:
        """Reject a group that cannot act on (height, width) before anything is sampled."""
        if "rot90" in self.group and height != width:
            raise ConfigError(field, f"rot90 needs square inputs, got {height}x{width}")


def _randint(low: int, high: int, generator: torch.Generator) -> int:
    return int(torch.randint(low, high, (1,), generator=generator))


def sample_transform(spec: TransformSpec, generator: torch.Generator, height: int, width: int) -> Transform:
    """Draw one transform uniformly from the configured group."""
    kind = spec.group[_randint(0, len(spec.group), generator)]
    if kind == "rot90":
        if height != width:
            raise ConfigError("tta.transforms.group", f"rot90 needs square inputs, got {height}x{width}")
        return Transform(kind, (_randint(1, 4, generator), 0))
    if kind == "shift":
        du = _randint(-spec.max_shift, spec.max_shift + 1, generator)
        dv = _randint(-spec.max_shift, spec.max_shift + 1, generator)
        return Transform(kind, (du, dv))
    return Transform(kind)


def apply_transform(x: torch.Tensor, t: Transform) -> torch.Tensor:
    if t.kind == "identity":
        return x
    if t.kind == "hflip":
        return torch.flip(x, dims=(-1,))
    if t.kind == "vflip":
        return torch.flip(x, dims=(-2,))
    if t.kind == "rot90":
        if x.shape[-1] != x.shape[-2]:
            raise ConfigError("transform", f"rot90 needs square inputs, got {tuple(x.shape[-2:])}")
        return torch.rot90(x, t.amount[0], dims=(-2, -1))
    return torch.roll(x, shifts=t.amount, dims=(-2, -1))


def invert_transform(x: torch.Tensor, t: Transform) -> torch.Tensor:
    if t.kind == "rot90":
        return apply_transform(x, Transform("rot90", (-t.amount[0], 0)))
    if t.kind == "shift":
        return apply_transform(x, Transform("shift", (-t.amount[0], -t.amount[1])))
    return apply_transform(x, t)
