"""
Half-quadratic-splitting unfolding reconstructor.

Each stage k runs the closed-form data step

    r = x + Φᵀ[(y − Φx) / (µ_k + diag(ΦΦᵀ))]

with µ_k predicted from the measurement by a small µ-net, then a learned
residual CNN denoiser ``x = D(r, ω_k)``. Stages do not share weights.
"""

import copy
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from config import DIAG_EPS, MU_FLOOR
from imaging.cassi import Measurement, adjoint, forward, phi_phiT_diag, unwrap
from utils.errors import ConfigError, DimensionError, DomainError, ParameterError
from utils.helpers import ensure_finite

logger = logging.getLogger("sfsci.unfolding")

MU_INIT = 0.5


@dataclass(frozen=True)
class DenoiserConfig:
    base_channels: int = 32
    depth: int = 4
    residual: bool = True
    mu_features: int = 8

    def __post_init__(self):
        if self.base_channels < 1:
            raise ConfigError("denoiser.base_channels", f"must be >= 1, got {self.base_channels}")
        if self.depth < 1:
            raise ConfigError("denoiser.depth", f"must be >= 1, got {self.depth}")
        if self.mu_features < 1:
            raise ConfigError("denoiser.mu_features", f"must be >= 1, got {self.mu_features}")

    def to_dict(self) -> dict:
        return asdict(self)


class Denoiser(nn.Module):
    """3x3 conv stack with ReLUs; residual output r + f(r) when configured."""

    def __init__(self, bands: int, cfg: DenoiserConfig):
        super().__init__()
        self.residual = cfg.residual
        width = cfg.base_channels

        if cfg.depth == 1:
            layers = [nn.Conv2d(bands, bands, 3, padding=1)]
        else:
            layers = [nn.Conv2d(bands, width, 3, padding=1), nn.ReLU()]
            for _ in range(cfg.depth - 2):
                layers += [nn.Conv2d(width, width, 3, padding=1), nn.ReLU()]
            layers.append(nn.Conv2d(width, bands, 3, padding=1))
        self.body = nn.Sequential(*layers)

    def zero_residual_(self) -> "Denoiser":
        """Zero the output conv so a residual denoiser is the identity."""
        last = self.body[-1]
        nn.init.zeros_(last.weight)
        nn.init.zeros_(last.bias)
        return self

    def forward(self, r: torch.Tensor) -> torch.Tensor:
        if not ensure_finite(r):
            raise DomainError("denoiser input contains non-finite values")
        out = self.body(r)
        return r + out if self.residual else out


class MuEstimator(nn.Module):
    """
    Predicts the HQS penalty µ > 0 from the energy-normalized measurement.

    conv3x3 -> ReLU -> global average pool -> FC -> ReLU -> FC -> softplus.
    """

    def __init__(self, features: int = 8):
        super().__init__()
        self.conv = nn.Conv2d(1, features, 3, padding=1)
        self.fc1 = nn.Linear(features, features)
        self.fc2 = nn.Linear(features, 1)
        nn.init.constant_(self.fc2.bias, math.log(math.expm1(MU_INIT)))

    def forward(self, y: torch.Tensor, mask: torch.Tensor, shift: int, bands: int) -> torch.Tensor:
        unbatched = y.dim() == 2
        if unbatched:
            y = y.unsqueeze(0)
        diag = phi_phiT_diag(mask, shift, bands).to(y.dtype)
        normalized = (y / diag.clamp_min(DIAG_EPS)).unsqueeze(1)

        pooled = F.relu(self.conv(normalized)).mean(dim=(-2, -1))
        hidden = F.relu(self.fc1(pooled))
        mu = F.softplus(self.fc2(hidden)).squeeze(-1) + MU_FLOOR
        return mu[0] if unbatched else mu


class UnfoldingStage(nn.Module):
    """Parameters of one stage: denoiser weights ω_k and its µ-net."""

    def __init__(self, bands: int, cfg: DenoiserConfig):
        super().__init__()
        self.denoiser = Denoiser(bands, cfg)
        self.mu_net = MuEstimator(cfg.mu_features)


def _broadcast_mu(mu: Union[float, torch.Tensor], like: torch.Tensor) -> Union[float, torch.Tensor]:
    if isinstance(mu, torch.Tensor):
        if bool((mu <= 0).any()):
            raise ParameterError("mu must be strictly positive")
        if mu.dim() == 1 and like.dim() >= 3:
            return mu.reshape(-1, *([1] * (like.dim() - 1)))
        return mu
    if mu <= 0:
        raise ParameterError(f"mu must be strictly positive, got {mu}")
    return mu


def data_update(
    x: torch.Tensor,
    y: torch.Tensor,
    mask: torch.Tensor,
    mu: Union[float, torch.Tensor],
    shift: int,
    diag: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """
    Closed-form HQS data step r = x + Φᵀ[(y − Φx) / (µ + diag(ΦΦᵀ))].

    Args:
        x: Current estimate (..., B, H, W)
        y: Measurement (..., H, W')
        mask: (H, W) coded aperture
        mu: Positive penalty, a float or a per-sample tensor of shape (N,)
        shift: Column shift per band
        diag: Precomputed phi_phiT_diag, recomputed when None

    Returns:
        r with the shape of x
    """
    bands = x.shape[-3]
    if diag is None:
        diag = phi_phiT_diag(mask, shift, bands)
    mu = _broadcast_mu(mu, y)
    residual = (y - forward(x, mask, shift)) / (mu + diag.to(y.dtype))
    return x + adjoint(residual, mask, shift, bands)


def initial_estimate(y: torch.Tensor, mask: torch.Tensor, shift: int, bands: int) -> torch.Tensor:
    """Energy-normalized back-projection x_0 = Φᵀ(y / max(diag(ΦΦᵀ), ε))."""
    diag = phi_phiT_diag(mask, shift, bands).to(y.dtype)
    return adjoint(y / diag.clamp_min(DIAG_EPS), mask, shift, bands)


class UnfoldingModel(nn.Module):
    """K unshared HQS stages over a fixed CASSI geometry (shift, bands)."""

    def __init__(self, stages: int, bands: int, shift: int, denoiser_cfg: DenoiserConfig = DenoiserConfig()):
        super().__init__()
        if stages < 1:
            raise ConfigError("stages", f"must be >= 1, got {stages}")
        if bands < 1:
            raise ConfigError("bands", f"must be >= 1, got {bands}")
        self.bands = bands
        self.shift = shift
        self.denoiser_cfg = denoiser_cfg
        self.frozen = False
        self.stages = nn.ModuleList([UnfoldingStage(bands, denoiser_cfg) for _ in range(stages)])

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def freeze(self) -> "UnfoldingModel":
        """Mark every parameter as frozen; optimizers must not reference them."""
        self.requires_grad_(False)
        self.frozen = True
        self.eval()
        return self

    def zero_residual_(self) -> "UnfoldingModel":
        for stage in self.stages:
            stage.denoiser.zero_residual_()
        return self

    def stage_forward(
        self,
        index: int,
        x: torch.Tensor,
        y: torch.Tensor,
        mask: torch.Tensor,
        diag: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        """One stage: µ estimate, data update, denoise."""
        mu = estimate_mu(y, mask, index, self)
        r = data_update(x, y, mask, mu, self.shift, diag)
        return denoise(r, self.stages[index])

    def forward(self, y: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        diag = phi_phiT_diag(mask, self.shift, self.bands)
        x = initial_estimate(y, mask, self.shift, self.bands)
        for index in range(self.num_stages):
            x = self.stage_forward(index, x, y, mask, diag)
        return x


def denoise(r: torch.Tensor, stage: UnfoldingStage) -> torch.Tensor:
    return stage.denoiser(r)


def estimate_mu(y: torch.Tensor, mask: torch.Tensor, stage_index: int, model: UnfoldingModel) -> torch.Tensor:
    """µ_k for stage ``stage_index``; shape (N,) for batched y, scalar otherwise."""
    if not 0 <= stage_index < model.num_stages:
        raise ParameterError(f"stage_index {stage_index} outside [0, {model.num_stages})")
    return model.stages[stage_index].mu_net(y, mask, model.shift, model.bands)


def check_geometry(model: nn.Module, y: Union[Measurement, torch.Tensor], mask: torch.Tensor) -> torch.Tensor:
    """Validate a measurement against a model's (shift, bands) and the mask shape."""
    if isinstance(y, Measurement) and (y.shift != model.shift or y.bands != model.bands):
        raise DimensionError(
            f"measurement geometry (shift={y.shift}, bands={y.bands}) does not match "
            f"model (shift={model.shift}, bands={model.bands})"
        )
    data = unwrap(y)
    expected = mask.shape[-1] + model.shift * (model.bands - 1)
    if data.shape[-1] != expected or data.shape[-2] != mask.shape[-2]:
        raise DimensionError(
            f"measurement shape {tuple(data.shape[-2:])} does not match mask {tuple(mask.shape)} "
            f"with shift={model.shift}, bands={model.bands}"
        )
    return data


def reconstruct(model: nn.Module, y: Union[Measurement, torch.Tensor], mask: torch.Tensor) -> torch.Tensor:
    """
    Run an unfolding model (plain or adapted) on a measurement.

    Args:
        model: UnfoldingModel or AdaptedModel
        y: Measurement or tensor (H, W') / (N, H, W')
        mask: (H, W) coded aperture

    Returns:
        Reconstruction (B, H, W) or (N, B, H, W)
    """
    data = check_geometry(model, y, mask)
    return model(data, mask)


def make_student(
    teacher: UnfoldingModel,
    stages: int,
    init: str = "random",
    seed: int = 0
) -> UnfoldingModel:
    """
    Build a shallower model with the teacher's architecture.

    Args:
        teacher: Source model
        stages: Student depth
        init: "random" (seeded default init) or "from_teacher" (copy first stages)
        seed: Seed for random init

    Returns:
        A trainable UnfoldingModel
    """
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        student = UnfoldingModel(stages, teacher.bands, teacher.shift, teacher.denoiser_cfg)

    if init == "from_teacher":
        if stages > teacher.num_stages:
            raise ConfigError("student_stages", "cannot exceed teacher stages when copying")
        for index in range(stages):
            student.stages[index].load_state_dict(copy.deepcopy(teacher.stages[index].state_dict()))
    elif init != "random":
        raise ConfigError("distill.student_init", f"must be 'random' or 'from_teacher', got '{init}'")

    student.requires_grad_(True)
    return student.to(next(teacher.parameters()).dtype)


def build_model(stages: int, bands: int, shift: int, cfg: DenoiserConfig, seed: int) -> UnfoldingModel:
    """Seeded model construction."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = UnfoldingModel(stages, bands, shift, cfg)
    logger.debug(f"Built {stages}-stage model (bands={bands}, shift={shift})")
    return model
