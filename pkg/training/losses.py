"""
Self-supervised losses for adapter training and test-time adaptation.

Measurement-domain terms compare Φx̂ with y; equivariance terms push a
transformed reconstruction through a measure-then-reconstruct cycle. The
equivariance and re-corruption terms are looked up by name in
``LOSS_REGISTRY`` so alternative definitions can be swapped in without
touching the trainers.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from imaging.cassi import SensingConfig, add_noise, forward
from training.configs import SSTConfig, TTAConfig
from training.transforms import Transform, apply_transform, sample_transform
from utils.errors import ConfigError
from utils.helpers import make_generator

logger = logging.getLogger("sfsci.losses")


@dataclass
class LossContext:
    """Everything a registered loss term may need for one batch."""

    model: nn.Module
    y: torch.Tensor
    mask: torch.Tensor
    xhat: torch.Tensor
    transform: Transform
    noise: SensingConfig
    generator: torch.Generator


LOSS_REGISTRY: Dict[str, Callable[[LossContext], torch.Tensor]] = {}


def register_loss(name: str):
    """Register a loss term ``f(ctx) -> scalar`` under ``name``."""
    def decorator(func: Callable[[LossContext], torch.Tensor]) -> Callable[[LossContext], torch.Tensor]:
        LOSS_REGISTRY[name] = func
        return func
    return decorator


def get_loss(name: str) -> Callable[[LossContext], torch.Tensor]:
    if name not in LOSS_REGISTRY:
        raise ConfigError("loss", f"unknown loss '{name}', registered: {sorted(LOSS_REGISTRY)}")
    return LOSS_REGISTRY[name]


def loss_measurement(xhat: torch.Tensor, y: torch.Tensor, mask: torch.Tensor, shift: int) -> torch.Tensor:
    """L_m = ‖Φx̂ − y‖² / n."""
    return F.mse_loss(forward(xhat, mask, shift), y)


def loss_ei(model: nn.Module, xhat: torch.Tensor, mask: torch.Tensor, t: Transform) -> torch.Tensor:
    """L_ei: MSE between F(Φ T(x̂)) and T(x̂). Gradients flow through both branches."""
    target = apply_transform(xhat, t)
    return F.mse_loss(model(forward(target, mask, model.shift), mask), target)


def loss_iu(
    model: nn.Module,
    y: torch.Tensor,
    mask: torch.Tensor,
    noise: SensingConfig,
    generator: Optional[torch.Generator] = None
) -> torch.Tensor:
    """
    L_iu: re-corruption consistency MSE(F(add_noise(y)), F(y)).

    The clean-input reconstruction is the label and carries no gradient.
    """
    generator = generator if generator is not None else make_generator(noise.seed)
    label = model(y, mask).detach()
    noisy = add_noise(y.detach(), noise, generator)
    return F.mse_loss(model(noisy, mask), label)


def loss_tv(xhat: torch.Tensor) -> torch.Tensor:
    """
    Anisotropic TV with forward differences and no wraparound.

    Per band the absolute differences along both axes are summed and divided
    by the number of difference terms H(W−1) + (H−1)W; bands (and batch) are
    then averaged.
    """
    height, width = xhat.shape[-2:]
    terms = height * (width - 1) + (height - 1) * width
    if terms == 0:
        return xhat.sum() * 0.0
    dv = (xhat[..., :, 1:] - xhat[..., :, :-1]).abs().sum(dim=(-2, -1))
    du = (xhat[..., 1:, :] - xhat[..., :-1, :]).abs().sum(dim=(-2, -1))
    return ((du + dv) / terms).mean()


@register_loss("ei")
def _ei_term(ctx: LossContext) -> torch.Tensor:
    return loss_ei(ctx.model, ctx.xhat, ctx.mask, ctx.transform)


@register_loss("iu")
def _iu_term(ctx: LossContext) -> torch.Tensor:
    return loss_iu(ctx.model, ctx.y, ctx.mask, ctx.noise, ctx.generator)


def loss_tta(
    model: nn.Module,
    y: torch.Tensor,
    mask: torch.Tensor,
    cfg: TTAConfig,
    generator: Optional[torch.Generator] = None,
    transform: Optional[Transform] = None
) -> Tuple[torch.Tensor, Dict[str, float]]:
    """
    Dual-domain test-time loss L_tta = L_im + λ·L_ker.

    L_im = MSE(Φ F(y), y) covers the range of Φᵀ. L_ker = MSE(F(Φ T(F(y))), T(F(y)))
    covers the null space; the label T(F(y)) is detached. A transform is
    sampled from ``cfg.transforms`` unless one is given.

    Returns:
        (total loss tensor, {"l_im", "l_ker", "total"} as floats)
    """
    total, parts, _ = tta_terms(model, y, mask, cfg, generator, transform)
    return total, parts


def tta_terms(
    model: nn.Module,
    y: torch.Tensor,
    mask: torch.Tensor,
    cfg: TTAConfig,
    generator: Optional[torch.Generator] = None,
    transform: Optional[Transform] = None
) -> Tuple[torch.Tensor, Dict[str, float], torch.Tensor]:
    """``loss_tta`` plus the reconstruction F(y) it was computed from."""
    xhat = model(y, mask)
    l_im = F.mse_loss(forward(xhat, mask, model.shift), y)

    if cfg.lam > 0:
        if transform is None:
            generator = generator if generator is not None else make_generator(cfg.seed)
            transform = sample_transform(cfg.transforms, generator, *xhat.shape[-2:])
        label = apply_transform(xhat, transform).detach()
        l_ker = F.mse_loss(model(forward(label, mask, model.shift), mask), label)
        total = l_im + cfg.lam * l_ker
    else:
        l_ker = torch.zeros((), dtype=l_im.dtype)
        total = l_im

    return total, {"l_im": float(l_im), "l_ker": float(l_ker), "total": float(total)}, xhat


def loss_sst(
    model: nn.Module,
    y: torch.Tensor,
    mask: torch.Tensor,
    cfg: SSTConfig,
    generator: torch.Generator
) -> Tuple[torch.Tensor, Dict[str, float]]:
    """
    Adapter training loss L_sst = L_m + w1·L_ei + w2·L_iu + w3·L_tv.

    Terms with a zero weight are skipped and reported as 0, so all-zero
    weights leave exactly L_m.
    """
    xhat = model(y, mask)
    l_m = loss_measurement(xhat, y, mask, model.shift)
    total = l_m
    parts = {"l_m": float(l_m), "l_ei": 0.0, "l_iu": 0.0, "l_tv": 0.0}

    if cfg.w1 > 0:
        transform = sample_transform(cfg.transforms, generator, *xhat.shape[-2:])
        ctx = LossContext(model, y, mask, xhat, transform, cfg.iu_noise, generator)
        l_ei = get_loss(cfg.ei_loss)(ctx)
        total = total + cfg.w1 * l_ei
        parts["l_ei"] = float(l_ei)
    if cfg.w2 > 0:
        ctx = LossContext(model, y, mask, xhat, Transform("identity"), cfg.iu_noise, generator)
        l_iu = get_loss(cfg.iu_loss)(ctx)
        total = total + cfg.w2 * l_iu
        parts["l_iu"] = float(l_iu)
    if cfg.w3 > 0:
        l_tv = loss_tv(xhat)
        total = total + cfg.w3 * l_tv
        parts["l_tv"] = float(l_tv)

    parts["total"] = float(total)
    return total, parts
