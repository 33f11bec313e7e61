"""
Slow learning: supervised pretraining of the deep backbone and
imaging-guided distillation into a shallow student.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from tqdm import tqdm

from config import SHOW_PROGRESS
from imaging.cassi import Measurement
from models.unfolding import UnfoldingModel, check_geometry
from training.configs import TrainConfig
from utils.cache_manager import ReconstructionCache
from utils.errors import ConfigError, DimensionError, TrainingError
from utils.helpers import ensure_finite, make_generator, tensor_fingerprint

logger = logging.getLogger("sfsci.slow")

MeasurementLike = Union[Measurement, torch.Tensor]


@dataclass
class TrainResult:
    model: nn.Module
    history: List[float] = field(default_factory=list)
    initial_loss: Optional[float] = None


@dataclass
class DistillSet:
    """Unlabeled measurements {y_i} sharing one mask and geometry."""

    measurements: List[Measurement]
    mask: torch.Tensor

    def __post_init__(self):
        if not self.measurements:
            raise ConfigError("distill_set", "needs at least one measurement")
        geometry = {(m.shift, m.bands, tuple(m.data.shape)) for m in self.measurements}
        if len(geometry) != 1:
            raise DimensionError("all measurements in a set must share shape, shift and bands")

    def stacked(self) -> torch.Tensor:
        return torch.stack([m.data for m in self.measurements])

    def __len__(self) -> int:
        return len(self.measurements)


def _snapshot(model: nn.Module) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def make_scheduler(optimizer: torch.optim.Optimizer, schedule: str, total_steps: int):
    if schedule == "cosine_annealing" and total_steps > 0:
        return torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=total_steps)
    return torch.optim.lr_scheduler.LambdaLR(optimizer, lambda _: 1.0)


def _fit(
    model: nn.Module,
    inputs: torch.Tensor,
    targets: torch.Tensor,
    mask: torch.Tensor,
    cfg: TrainConfig,
    loss_fn: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
    tag: str
) -> TrainResult:
    """Mini-batch Adam over ``model``'s trainable parameters, one loss value per epoch."""
    count = inputs.shape[0]
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=cfg.lr_init)
    steps_per_epoch = -(-count // cfg.batch_size)
    scheduler = make_scheduler(optimizer, cfg.lr_schedule, cfg.epochs * steps_per_epoch)
    generator = make_generator(cfg.seed)

    with torch.no_grad():
        model.eval()
        initial = float(loss_fn(model(inputs, mask), targets))
    result = TrainResult(model, [], initial)
    last_good = _snapshot(model)

    model.train()
    for epoch in tqdm(range(cfg.epochs), desc=tag, disable=not SHOW_PROGRESS):
        order = torch.randperm(count, generator=generator)
        total = 0.0
        for step, batch in enumerate(order.split(cfg.batch_size)):
            optimizer.zero_grad()
            loss = loss_fn(model(inputs[batch], mask), targets[batch])
            if not ensure_finite(loss):
                model.load_state_dict(last_good)
                raise TrainingError(
                    f"{tag}: non-finite loss",
                    diagnostics={"epoch": epoch, "step": step, "last_loss": result.history[-1] if result.history else initial},
                    history=result.history,
                    last_good_state=last_good
                )
            loss.backward()
            optimizer.step()
            scheduler.step()
            total += float(loss) * len(batch)

        result.history.append(total / count)
        last_good = _snapshot(model)
        logger.info(f"{tag} epoch {epoch + 1}/{cfg.epochs}: loss={result.history[-1]:.6g} lr={scheduler.get_last_lr()[0]:.3g}")

    model.eval()
    return result


def train_supervised(
    model: UnfoldingModel,
    pairs: Sequence[Tuple[MeasurementLike, torch.Tensor]],
    mask: torch.Tensor,
    cfg: TrainConfig
) -> TrainResult:
    """
    Pretrain a backbone on (measurement, ground truth) pairs with MSE.

    Args:
        model: Backbone to train in place
        pairs: (y, x) pairs; x has shape (B, H, W)
        mask: Coded aperture
        cfg: Training schedule

    Returns:
        TrainResult with per-epoch mean MSE
    """
    if not pairs:
        raise ConfigError("pairs", "supervised training needs at least one pair")
    dtype = next(model.parameters()).dtype
    inputs = torch.stack([check_geometry(model, y, mask) for y, _ in pairs]).to(dtype)
    targets = torch.stack([torch.as_tensor(np.asarray(x) if not isinstance(x, torch.Tensor) else x) for _, x in pairs]).to(dtype)

    logger.info(f"Supervised training on {len(pairs)} pairs for {cfg.epochs} epochs")
    return _fit(model, inputs, targets, mask.to(dtype), cfg, F.mse_loss, "train-slow")


def distillation_loss(student_out: torch.Tensor, teacher_out: torch.Tensor) -> torch.Tensor:
    """L_dis = (1/N) Σ_i ‖X_st,i − X_th,i‖_F²."""
    return ((student_out - teacher_out) ** 2).sum(dim=(-3, -2, -1)).mean()


def teacher_targets(
    teacher: UnfoldingModel,
    dset: DistillSet,
    cache: Optional[ReconstructionCache] = None
) -> torch.Tensor:
    """Frozen-teacher reconstructions of every measurement, computed once through the cache."""
    cache = cache if cache is not None else ReconstructionCache()
    fingerprint = tensor_fingerprint(teacher.state_dict().values())
    dtype = next(teacher.parameters()).dtype
    mask = dset.mask.to(dtype)

    outputs = []
    with torch.no_grad():
        for measurement in dset.measurements:
            y = measurement.data.to(dtype)
            cached = cache.get(fingerprint, y)
            if cached is None:
                cached = teacher(y.unsqueeze(0), mask)[0]
                cache.set(fingerprint, y, cached)
            outputs.append(cached)
    logger.info(f"Teacher targets ready: {cache.get_stats()}")
    return torch.stack(outputs)


def distill(
    teacher: UnfoldingModel,
    student: UnfoldingModel,
    dset: DistillSet,
    cfg: TrainConfig,
    cache: Optional[ReconstructionCache] = None
) -> TrainResult:
    """
    Train ``student`` to reproduce the frozen teacher's reconstructions.

    Args:
        teacher: Deep model, frozen in place
        student: Shallow model with the same denoiser config and geometry
        dset: Measurements the teacher was not trained on
        cfg: Training schedule
        cache: Optional cache for teacher outputs

    Returns:
        TrainResult with per-epoch L_dis and the loss before training
    """
    if teacher.denoiser_cfg != student.denoiser_cfg:
        raise ConfigError("denoiser", "teacher and student must share one denoiser config")
    if (teacher.shift, teacher.bands) != (student.shift, student.bands):
        raise ConfigError("sensing", "teacher and student must share shift and bands")
    teacher.freeze()

    targets = teacher_targets(teacher, dset, cache)
    dtype = next(student.parameters()).dtype
    inputs = dset.stacked().to(dtype)

    logger.info(
        f"Distilling {teacher.num_stages}-stage teacher into {student.num_stages}-stage student "
        f"on {len(dset)} measurements"
    )
    return _fit(student, inputs, targets.to(dtype), dset.mask.to(dtype), cfg, distillation_loss, "distill")
