"""Slow learning (pretraining, distillation) and fast learning (adapters, TTA)."""

from .configs import SSTConfig, TTAConfig, TrainConfig
from .transforms import Transform, TransformSpec, apply_transform, invert_transform, sample_transform
from .losses import (
    LOSS_REGISTRY,
    LossContext,
    get_loss,
    loss_ei,
    loss_iu,
    loss_measurement,
    loss_sst,
    loss_tta,
    loss_tv,
    register_loss,
)
from .slow_learning import DistillSet, TrainResult, distill, distillation_loss, train_supervised
from .fast_learning import AdaptResult, SSTResult, adapt, adapt_all, train_adapters

__all__ = [
    'SSTConfig',
    'TTAConfig',
    'TrainConfig',
    'Transform',
    'TransformSpec',
    'apply_transform',
    'invert_transform',
    'sample_transform',
    'LOSS_REGISTRY',
    'LossContext',
    'get_loss',
    'loss_ei',
    'loss_iu',
    'loss_measurement',
    'loss_sst',
    'loss_tta',
    'loss_tv',
    'register_loss',
    'DistillSet',
    'TrainResult',
    'distill',
    'distillation_loss',
    'train_supervised',
    'AdaptResult',
    'SSTResult',
    'adapt',
    'adapt_all',
    'train_adapters'
]
