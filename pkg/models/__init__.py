"""Unfolding reconstructor, adapters, model statistics and checkpoints."""

from .unfolding import (
    Denoiser,
    DenoiserConfig,
    MuEstimator,
    UnfoldingModel,
    UnfoldingStage,
    build_model,
    data_update,
    denoise,
    estimate_mu,
    initial_estimate,
    make_student,
    reconstruct,
)
from .adapters import AdaptedModel, AdapterBlock, adapter_forward, adapter_optimizer, attach_adapters
from .stats import ModelStats, count_macs, count_parameters, model_stats
from .checkpoint import load_checkpoint, read_manifest, save_checkpoint

__all__ = [
    'Denoiser',
    'DenoiserConfig',
    'MuEstimator',
    'UnfoldingModel',
    'UnfoldingStage',
    'build_model',
    'data_update',
    'denoise',
    'estimate_mu',
    'initial_estimate',
    'make_student',
    'reconstruct',
    'AdaptedModel',
    'AdapterBlock',
    'adapter_forward',
    'adapter_optimizer',
    'attach_adapters',
    'ModelStats',
    'count_macs',
    'count_parameters',
    'model_stats',
    'load_checkpoint',
    'read_manifest',
    'save_checkpoint'
]
