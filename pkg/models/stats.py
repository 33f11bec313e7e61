"""
Parameter and multiply-accumulate counts.

MACs follow conv arithmetic only: kh*kw*(C_in/groups)*C_out*H_out*W_out per
conv and in*out per linear row. The HQS data steps are not counted.
"""

import logging
from dataclasses import asdict, dataclass
from typing import List

import torch
import torch.nn as nn

logger = logging.getLogger("sfsci.stats")


@dataclass(frozen=True)
class ModelStats:
    param_count: int
    mac_estimate: int

    def to_dict(self) -> dict:
        return asdict(self)


def count_parameters(module: nn.Module, trainable_only: bool = False) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad or not trainable_only)


def count_macs(module: nn.Module, *inputs: torch.Tensor) -> int:
    """Run ``module(*inputs)`` once and sum conv/linear MACs from forward hooks."""
    totals: List[int] = []

    def conv_hook(layer: nn.Conv2d, _inputs, output: torch.Tensor):
        kh, kw = layer.kernel_size
        per_output = kh * kw * (layer.in_channels // layer.groups)
        totals.append(per_output * output.numel())

    def linear_hook(layer: nn.Linear, _inputs, output: torch.Tensor):
        totals.append(layer.in_features * output.numel())

    handles = []
    for layer in module.modules():
        if isinstance(layer, nn.Conv2d):
            handles.append(layer.register_forward_hook(conv_hook))
        elif isinstance(layer, nn.Linear):
            handles.append(layer.register_forward_hook(linear_hook))

    try:
        with torch.no_grad():
            module(*inputs)
    finally:
        for handle in handles:
            handle.remove()
    return int(sum(totals))


def model_stats(model: nn.Module, height: int, width: int) -> ModelStats:
    """
    Parameter count and MACs of one reconstruction at spatial size (height, width).

    Works for UnfoldingModel and AdaptedModel (both expose shift and bands).
    """
    dtype = next(model.parameters()).dtype
    measured_width = width + model.shift * (model.bands - 1)
    y = torch.zeros(1, height, measured_width, dtype=dtype)
    mask = torch.ones(height, width, dtype=dtype)

    stats = ModelStats(count_parameters(model), count_macs(model, y, mask))
    logger.debug(f"{type(model).__name__} at {height}x{width}: {stats}")
    return stats
