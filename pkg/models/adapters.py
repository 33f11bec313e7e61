"""
Lightweight per-stage adaptation modules for a frozen unfolding backbone.

After every frozen stage an adapter runs its own data-update step (with its
own µ-net) and adds two convolutional corrections to the result:

    r   = data_update(x_stage, y, µ_a)
    out = r + spatial(r) + spectral(r)

``spatial`` is conv3x3 -> ReLU -> conv3x3 at width B, ``spectral`` is a single
1x1 conv mixing bands per pixel.
"""

import logging
from typing import List, Optional

import torch
import torch.nn as nn

from imaging.cassi import phi_phiT_diag
from models.stats import count_parameters
from models.unfolding import MuEstimator, UnfoldingModel, data_update, initial_estimate
from utils.errors import ConfigError

logger = logging.getLogger("sfsci.adapters")

ADAPTER_INITS = ("zero_residual", "random")
LIGHTWEIGHT_LIMIT = 0.15


class AdapterBlock(nn.Module):
    """Adapter parameters θ for one stage."""

    def __init__(self, bands: int, mu_features: int = 8):
        super().__init__()
        self.mu_net = MuEstimator(mu_features)
        self.spatial = nn.Sequential(
            nn.Conv2d(bands, bands, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(bands, bands, 3, padding=1),
        )
        self.spectral = nn.Conv2d(bands, bands, 1)

    def zero_residual_(self) -> "AdapterBlock":
        """Zero the output layers of both conv blocks."""
        for layer in (self.spatial[-1], self.spectral):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)
        return self


def adapter_forward(
    x_stage: torch.Tensor,
    y: torch.Tensor,
    mask: torch.Tensor,
    adapter: AdapterBlock,
    shift: int,
    diag: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """Adapter step appended to a frozen stage output."""
    bands = x_stage.shape[-3]
    mu = adapter.mu_net(y, mask, shift, bands)
    r = data_update(x_stage, y, mask, mu, shift, diag)
    return r + adapter.spatial(r) + adapter.spectral(r)


class AdaptedModel(nn.Module):
    """Frozen backbone ω* interleaved with trainable adapters θ."""

    def __init__(self, backbone: UnfoldingModel, adapters: nn.ModuleList):
        super().__init__()
        if len(adapters) != backbone.num_stages:
            raise ConfigError(
                "adapters",
                f"need one adapter per stage ({backbone.num_stages}), got {len(adapters)}"
            )
        self.backbone = backbone
        self.adapters = adapters

    @property
    def bands(self) -> int:
        return self.backbone.bands

    @property
    def shift(self) -> int:
        return self.backbone.shift

    @property
    def num_stages(self) -> int:
        return self.backbone.num_stages

    def adapter_parameters(self) -> List[nn.Parameter]:
        return list(self.adapters.parameters())

    def adapter_param_count(self) -> int:
        return count_parameters(self.adapters)

    def is_lightweight(self, limit: float = LIGHTWEIGHT_LIMIT) -> bool:
        """Every adapter is at most ``limit`` of one backbone stage's parameters."""
        stage_params = count_parameters(self.backbone.stages[0])
        return all(count_parameters(a) <= limit * stage_params for a in self.adapters)

    def train(self, mode: bool = True) -> "AdaptedModel":
        super().train(mode)
        self.backbone.eval()
        return self

    def forward(self, y: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        diag = phi_phiT_diag(mask, self.shift, self.bands)
        x = initial_estimate(y, mask, self.shift, self.bands)
        for index, adapter in enumerate(self.adapters):
            x = self.backbone.stage_forward(index, x, y, mask, diag)
            x = adapter_forward(x, y, mask, adapter, self.shift, diag)
        return x


def attach_adapters(model: UnfoldingModel, init: str = "zero_residual", seed: int = 0) -> AdaptedModel:
    """
    Freeze ``model`` and append one adapter after each of its stages.

    Args:
        model: Trained backbone (frozen in place, values untouched)
        init: "zero_residual" (conv blocks start at exactly zero) or "random"
        seed: Seed for adapter initialization

    Returns:
        AdaptedModel sharing ``model`` as its backbone
    """
    if init not in ADAPTER_INITS:
        raise ConfigError("adapters.init", f"must be one of {ADAPTER_INITS}, got '{init}'")

    model.freeze()
    dtype = next(model.parameters()).dtype
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        blocks = [AdapterBlock(model.bands, model.denoiser_cfg.mu_features) for _ in range(model.num_stages)]
    if init == "zero_residual":
        for block in blocks:
            block.zero_residual_()

    adapted = AdaptedModel(model, nn.ModuleList(blocks).to(dtype))
    if not adapted.is_lightweight():
        logger.warning(
            f"Adapters exceed {LIGHTWEIGHT_LIMIT:.0%} of a backbone stage "
            f"({count_parameters(adapted.adapters[0])} vs {count_parameters(model.stages[0])} params)"
        )
    logger.debug(
        f"Attached {len(blocks)} adapters ({adapted.adapter_param_count()} params) "
        f"to a frozen {model.num_stages}-stage backbone ({count_parameters(model)} params)"
    )
    return adapted


def adapter_optimizer(model: AdaptedModel, lr: float) -> torch.optim.Optimizer:
    """Adam over adapter parameters only; refuses a backbone that is not frozen."""
    if not model.backbone.frozen or any(p.requires_grad for p in model.backbone.parameters()):
        raise ConfigError("backbone", "must be frozen before adapter optimization")
    backbone_ids = {id(p) for p in model.backbone.parameters()}
    params = model.adapter_parameters()
    if any(id(p) in backbone_ids for p in params):
        raise ConfigError("optimizer", "may only reference adapter parameters")
    return torch.optim.Adam(params, lr=lr)
