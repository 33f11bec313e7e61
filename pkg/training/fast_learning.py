"""
Fast learning: self-supervised adapter training on unlabeled target
measurements and per-sample test-time adaptation.

Only adapter parameters ever reach an optimizer; the backbone stays frozen
and bit-identical.
"""

import copy
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import torch
from tqdm import tqdm

from config import SHOW_PROGRESS
from imaging.metrics import psnr
from models.adapters import AdaptedModel, adapter_optimizer
from models.unfolding import check_geometry
from training.configs import SSTConfig, TTAConfig
from training.losses import loss_sst, tta_terms
from training.slow_learning import DistillSet
from utils.errors import ConfigError, TrainingError
from utils.helpers import ensure_finite, make_generator

logger = logging.getLogger("sfsci.fast")


@dataclass
class SSTResult:
    model: AdaptedModel
    history: List[Dict[str, float]] = field(default_factory=list)
    initial: Dict[str, float] = field(default_factory=dict)
    final: Dict[str, float] = field(default_factory=dict)


@dataclass
class AdaptResult:
    model: AdaptedModel
    reconstruction: torch.Tensor
    trace: List[Dict[str, float]] = field(default_factory=list)


def _require_adapted(model) -> AdaptedModel:
    if not isinstance(model, AdaptedModel):
        raise ConfigError("model", "fast learning needs a backbone with attached adapters")
    return model


def _adapter_snapshot(model: AdaptedModel) -> dict:
    return {k: v.detach().clone() for k, v in model.adapters.state_dict().items()}


def evaluate_sst(model: AdaptedModel, inputs: torch.Tensor, mask: torch.Tensor, cfg: SSTConfig) -> Dict[str, float]:
    """L_sst components over the whole set with a fixed transform/noise stream."""
    generator = make_generator(cfg.seed)
    totals: Dict[str, float] = {}
    with torch.no_grad():
        for batch in torch.arange(inputs.shape[0]).split(cfg.batch_size):
            _, parts = loss_sst(model, inputs[batch], mask, cfg, generator)
            for key, value in parts.items():
                totals[key] = totals.get(key, 0.0) + value * len(batch)
    return {key: value / inputs.shape[0] for key, value in totals.items()}


def train_adapters(model: AdaptedModel, dset: DistillSet, cfg: SSTConfig) -> SSTResult:
    """
    Self-supervised adapter training on unlabeled target measurements.

    Args:
        model: Backbone with attached adapters; the backbone must be frozen
        dset: Target-domain measurements and their mask
        cfg: Loss weights and schedule

    Returns:
        SSTResult with a per-epoch breakdown of L_m, L_ei, L_iu, L_tv and the total
    """
    model = _require_adapted(model)
    optimizer = adapter_optimizer(model, cfg.lr)
    dtype = next(model.parameters()).dtype
    inputs = dset.stacked().to(dtype)
    mask = dset.mask.to(dtype)
    if cfg.w1 > 0:
        cfg.transforms.check_shape(*mask.shape[-2:], field="sst.transforms.group")
    generator = make_generator(cfg.seed)

    result = SSTResult(model, [], evaluate_sst(model, inputs, mask, cfg))
    logger.info(
        f"Adapter training on {len(dset)} measurements for {cfg.epochs} epochs "
        f"(initial L_sst={result.initial['total']:.6g})"
    )

    last_good = _adapter_snapshot(model)
    model.train()
    for epoch in tqdm(range(cfg.epochs), desc="train-adapters", disable=not SHOW_PROGRESS):
        order = torch.randperm(inputs.shape[0], generator=generator)
        sums: Dict[str, float] = {}
        for step, batch in enumerate(order.split(cfg.batch_size)):
            optimizer.zero_grad()
            total, parts = loss_sst(model, inputs[batch], mask, cfg, generator)
            if not ensure_finite(total):
                model.adapters.load_state_dict(last_good)
                model.eval()
                raise TrainingError(
                    "train-adapters: non-finite loss",
                    diagnostics={"epoch": epoch, "step": step, **parts},
                    history=result.history,
                    last_good_state=last_good
                )
            total.backward()
            optimizer.step()
            for key, value in parts.items():
                sums[key] = sums.get(key, 0.0) + value * len(batch)

        row = {"epoch": epoch + 1, **{key: value / inputs.shape[0] for key, value in sums.items()}}
        result.history.append(row)
        # only finite weights become the restore point
        if all(ensure_finite(v) for v in model.adapters.state_dict().values()):
            last_good = _adapter_snapshot(model)
        logger.info(
            f"train-adapters epoch {epoch + 1}/{cfg.epochs}: total={row['total']:.6g} "
            f"m={row['l_m']:.3g} ei={row['l_ei']:.3g} iu={row['l_iu']:.3g} tv={row['l_tv']:.3g}"
        )

    model.eval()
    result.final = evaluate_sst(model, inputs, mask, cfg)
    logger.info(f"Adapter training done: L_sst {result.initial['total']:.6g} -> {result.final['total']:.6g}")
    return result


def adapt(
    model: AdaptedModel,
    y,
    mask: torch.Tensor,
    cfg: TTAConfig,
    reference: Optional[torch.Tensor] = None
) -> AdaptResult:
    """
    Test-time adaptation of the adapters to a single measurement.

    Episodic mode works on a private copy of the model so the caller's
    adapters are untouched; online mode updates ``model`` in place.

    Args:
        model: Backbone with attached adapters; the backbone must be frozen
        y: Measurement (H, W') or (1, H, W')
        mask: Coded aperture
        cfg: λ, iteration count, learning rate, transforms, mode
        reference: Optional ground truth for a PSNR column in the trace

    Returns:
        AdaptResult with the model used, F(y) after adaptation and a trace row
        per iteration plus a final row
    """
    model = _require_adapted(model)
    data = check_geometry(model, y, mask)
    unbatched = data.dim() == 2
    if unbatched:
        data = data.unsqueeze(0)
    dtype = next(model.parameters()).dtype
    data, mask = data.to(dtype), mask.to(dtype)
    if cfg.lam > 0:
        cfg.transforms.check_shape(*mask.shape[-2:])

    working = copy.deepcopy(model) if cfg.mode == "episodic" else model
    optimizer = adapter_optimizer(working, cfg.lr)
    generator = make_generator(cfg.seed)

    trace: List[Dict[str, float]] = []
    best_loss = float("inf")
    best_state = _adapter_snapshot(working)
    diverged = False
    start = time.perf_counter()

    def record(iteration: int, parts: Dict[str, float], xhat: torch.Tensor):
        row = {"iteration": iteration, **parts, "best_loss": min(best_loss, parts["total"])}
        if reference is not None:
            row["psnr"] = psnr(xhat.detach()[0], reference)
        row["elapsed_s"] = time.perf_counter() - start
        trace.append(row)

    working.train()
    for iteration in range(cfg.iters):
        optimizer.zero_grad()
        total, parts, xhat = tta_terms(working, data, mask, cfg, generator)
        if not ensure_finite(total):
            logger.warning(f"TTA stopped at iteration {iteration}: non-finite loss, restoring best state")
            diverged = True
            break
        record(iteration, parts, xhat)
        if parts["total"] < best_loss:
            best_loss = parts["total"]
            best_state = _adapter_snapshot(working)
        total.backward()
        optimizer.step()

    if diverged:
        working.adapters.load_state_dict(best_state)
    working.eval()
    with torch.no_grad():
        _, parts, xhat = tta_terms(working, data, mask, cfg, generator)
    record(len(trace), parts, xhat)

    logger.debug(
        f"TTA ({cfg.mode}, {cfg.iters} iters): L_tta {trace[0]['total']:.6g} -> {trace[-1]['total']:.6g}"
    )
    reconstruction = xhat[0] if unbatched else xhat
    return AdaptResult(working, reconstruction, trace)


def adapt_all(
    model: AdaptedModel,
    measurements: Sequence,
    mask: torch.Tensor,
    cfg: TTAConfig,
    references: Optional[Sequence[torch.Tensor]] = None
) -> List[AdaptResult]:
    """
    Adapt every measurement in turn with per-sample seeds ``cfg.seed + i``.

    In online mode adapter state carries over from one sample to the next.
    """
    results = []
    for index, y in enumerate(tqdm(measurements, desc="tta", disable=not SHOW_PROGRESS)):
        sample_cfg = replace(cfg, seed=cfg.seed + index)
        reference = references[index] if references is not None else None
        result = adapt(model, y, mask, sample_cfg, reference)
        if cfg.mode == "online":
            model = result.model
        results.append(result)
        logger.info(f"TTA sample {index}: L_tta {result.trace[0]['total']:.6g} -> {result.trace[-1]['total']:.6g}")
    return results
