"""
Pipeline commands.

Each command reads the artifacts of the commands before it from the output
directory and writes its own:

    gen-data        data/{source,distill,target}/, data/mask
    train-slow      checkpoints/teacher, train_slow_history.csv
    distill         checkpoints/student, distill_history.csv
    train-adapters  checkpoints/adapted, adapter_history.csv
    tta             tta_trace.csv, tta_mean_trace.csv, tta_metrics.json
    evaluate        metrics.json, metrics.csv
    ablate          ablation.csv
    wiener-lab      wiener_filter.csv, wiener_summary.json
    stats           stats.json, stats.csv

Measurements are re-simulated from the stored cubes with fixed per-domain
seeds, so every command sees the same noisy snapshots.
Datasets and checkpoints record the data hash of the config that produced
them, and a run with other data or sensing settings refuses to resume on them.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from analysis.wiener_lab import run_wiener_lab
from config import CACHE_SUBDIR, CHECKPOINT_SUBDIR, DATA_SUBDIR
from imaging.cassi import Measurement, make_mask, simulate
from imaging.metrics import MetricsReport, score_scenes
from imaging.storage import load_cube, load_dataset, save_cube, save_dataset
from imaging.synthetic import gen_synthetic, mean_band_correlation
from models.adapters import AdaptedModel, attach_adapters
from models.checkpoint import load_checkpoint, read_manifest, save_checkpoint
from models.stats import model_stats
from models.unfolding import UnfoldingModel, build_model, make_student, reconstruct
from pipeline.experiment import ExperimentConfig
from training.fast_learning import adapt_all, train_adapters
from training.slow_learning import DistillSet, distill, train_supervised
from utils.cache_manager import ReconstructionCache
from utils.data_processor import DataProcessor
from utils.errors import ConfigError, MissingArtifactError, StorageError
from utils.helpers import make_generator, retry_on_error

logger = logging.getLogger("sfsci.pipeline")

SPLIT_SEED_OFFSETS = {"source": 0, "distill": 1, "target": 2}
MODEL_PRODUCERS = {"teacher": "train-slow", "student": "distill", "adapted": "train-adapters"}
SPLITS = ("source", "distill", "target", "target-train", "target-test")


@dataclass
class RunContext:
    """Resolved config, output directory and per-invocation options."""

    cfg: ExperimentConfig
    out: Path
    figures: bool = False
    options: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.out = Path(self.out)
        self.config_hash = self.cfg.config_hash()
        self.data_hash = self.cfg.data_hash()
        self.arch_hash = self.cfg.arch_hash()

    @property
    def data_dir(self) -> Path:
        return self.out / DATA_SUBDIR

    def checkpoint(self, name: str) -> Path:
        return self.out / CHECKPOINT_SUBDIR / name

    def path(self, name: str) -> Path:
        return self.out / name


@retry_on_error(max_attempts=3)
def write_json(path: Path, payload: Dict[str, Any], config_hash: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({**payload, "config_hash": config_hash}, indent=2))
    logger.info(f"Wrote {path}")
    return path


def _plot(df: pd.DataFrame, x: str, ys: Sequence[str], path: Path, title: str) -> None:
    """Optional line plot; CSVs remain the output contract."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for column in ys:
        if column in df.columns:
            ax.plot(df[x], df[column], label=column)
    ax.set_xlabel(x)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info(f"Wrote figure {path}")


# ========================================
# ARTIFACT ACCESS
# ========================================
def load_mask(ctx: RunContext) -> torch.Tensor:
    try:
        return torch.from_numpy(load_cube(ctx.data_dir / "mask")[0].copy())
    except StorageError as e:
        raise MissingArtifactError(f"mask ({e})", "gen-data")


def load_split(ctx: RunContext, split: str, mask: torch.Tensor) -> Tuple[List[np.ndarray], List[Measurement]]:
    """
    Cubes and noisy snapshots for source, distill, target, target-train or target-test.

    A whole domain is measured on one stream seeded by (sensing seed, domain)
    before slicing, so target-train and target-test never share noise draws.
    """
    if split not in SPLITS:
        raise ConfigError("split", f"must be one of {SPLITS}, got '{split}'")
    domain = "target" if split.startswith("target") else split
    try:
        cubes, manifest = load_dataset(ctx.data_dir / domain)
    except StorageError as e:
        raise MissingArtifactError(f"{domain} dataset ({e})", "gen-data")
    if manifest.get("data_hash") != ctx.data_hash:
        raise StorageError(
            "data_hash",
            f"{domain} dataset was generated with different data or sensing settings; rerun `gen-data`"
        )

    generator = make_generator(ctx.cfg.sensing.seed + SPLIT_SEED_OFFSETS[domain])
    measurements = [simulate(torch.from_numpy(c), mask, ctx.cfg.sensing, generator) for c in cubes]

    test_count = ctx.cfg.data.test_count
    if split == "target-train":
        return cubes[:-test_count], measurements[:-test_count]
    if split == "target-test":
        return cubes[-test_count:], measurements[-test_count:]
    return cubes, measurements


def load_model(ctx: RunContext, name: str) -> torch.nn.Module:
    path = ctx.checkpoint(name)
    if not path.with_name(name + ".json").exists():
        raise MissingArtifactError(f"{name} checkpoint {path}.json", MODEL_PRODUCERS[name])
    trained_on = read_manifest(path).get("extra", {}).get("data_hash")
    if trained_on != ctx.data_hash:
        raise StorageError(
            "data_hash",
            f"{name} checkpoint was trained on different data or sensing settings; rerun `{MODEL_PRODUCERS[name]}`"
        )
    return load_checkpoint(path, expected_hash=ctx.arch_hash)


def evaluate_model(
    model: torch.nn.Module,
    measurements: Sequence[Measurement],
    mask: torch.Tensor,
    cubes: Sequence[np.ndarray]
) -> MetricsReport:
    """PSNR/SSIM of ``model``'s reconstructions against ground-truth cubes."""
    model.eval()
    with torch.no_grad():
        recons = [reconstruct(model, m, mask) for m in measurements]
    return score_scenes(recons, cubes)


# ========================================
# COMMANDS
# ========================================
def gen_data(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    extra = {"config_hash": ctx.config_hash, "data_hash": ctx.data_hash}
    splits = {"source": cfg.data.source, "distill": cfg.data.distill, "target": cfg.data.target}

    summary = {}
    for domain, synth in splits.items():
        cubes = gen_synthetic(synth)
        save_dataset(ctx.data_dir / domain, cubes, domain, {**extra, "generator": synth.to_dict()})
        summary[domain] = {"count": len(cubes), "band_correlation": mean_band_correlation(cubes)}

    mask = make_mask(cfg.height, cfg.width, cfg.data.mask_density, cfg.seed)
    save_cube(ctx.data_dir / "mask", mask[None])
    logger.info(
        f"Band correlation source={summary['source']['band_correlation']:.3f} "
        f"target={summary['target']['band_correlation']:.3f}"
    )
    write_json(ctx.data_dir / "summary.json", summary, ctx.config_hash)
    return summary


def train_slow(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    mask = load_mask(ctx)
    cubes, measurements = load_split(ctx, "source", mask)

    teacher = build_model(cfg.teacher_stages, cfg.bands, cfg.sensing.shift, cfg.denoiser, cfg.seed)
    pairs = [(m, torch.from_numpy(c)) for m, c in zip(measurements, cubes)]
    result = train_supervised(teacher, pairs, mask, cfg.train)

    report = evaluate_model(teacher, measurements, mask, cubes)
    save_checkpoint(
        ctx.checkpoint("teacher"), teacher, ctx.arch_hash,
        {
            "config_hash": ctx.config_hash, "data_hash": ctx.data_hash,
            "history": result.history, "train_psnr": report.mean_psnr,
        }
    )
    df = DataProcessor.format_loss_history(result.history, "mse")
    DataProcessor.write_csv(df, ctx.path("train_slow_history.csv"), ctx.config_hash)
    if ctx.figures:
        _plot(df, "epoch", ["mse"], ctx.path("train_slow_history.png"), "Teacher pretraining")
    logger.info(f"Teacher ({cfg.teacher_stages} stages) train PSNR {report.mean_psnr:.2f} dB")
    return {"train_psnr": report.mean_psnr, "final_loss": result.history[-1] if result.history else None}


def _distill_student(ctx: RunContext, teacher: UnfoldingModel, stages: int) -> Tuple[UnfoldingModel, Any]:
    cfg = ctx.cfg
    mask = load_mask(ctx)
    _, measurements = load_split(ctx, "distill", mask)
    student = make_student(teacher, stages, cfg.student_init, cfg.seed + 1)
    cache = ReconstructionCache(ctx.out / CACHE_SUBDIR)
    result = distill(teacher, student, DistillSet(measurements, mask), cfg.distill, cache)
    return student, result


def distill_command(ctx: RunContext) -> Dict[str, Any]:
    teacher = load_model(ctx, "teacher")
    student, result = _distill_student(ctx, teacher, ctx.cfg.student_stages)

    save_checkpoint(
        ctx.checkpoint("student"), student, ctx.arch_hash,
        {
            "config_hash": ctx.config_hash, "data_hash": ctx.data_hash,
            "history": result.history, "initial_loss": result.initial_loss,
        }
    )
    df = DataProcessor.format_loss_history([result.initial_loss] + result.history, "l_dis")
    df["epoch"] = df["epoch"] - 1
    DataProcessor.write_csv(df, ctx.path("distill_history.csv"), ctx.config_hash)
    if ctx.figures:
        _plot(df, "epoch", ["l_dis"], ctx.path("distill_history.png"), "Distillation")
    final = result.history[-1] if result.history else result.initial_loss
    return {"initial_loss": result.initial_loss, "final_loss": final}


def _train_adapters(ctx: RunContext, model: UnfoldingModel) -> Tuple[AdaptedModel, Any]:
    cfg = ctx.cfg
    mask = load_mask(ctx)
    _, measurements = load_split(ctx, "target-train", mask)
    adapted = attach_adapters(model, cfg.adapter_init, cfg.seed + 2)
    result = train_adapters(adapted, DistillSet(measurements, mask), cfg.sst)
    return adapted, result


def train_adapters_command(ctx: RunContext) -> Dict[str, Any]:
    student = load_model(ctx, "student")
    adapted, result = _train_adapters(ctx, student)

    save_checkpoint(
        ctx.checkpoint("adapted"), adapted, ctx.arch_hash,
        {"config_hash": ctx.config_hash, "data_hash": ctx.data_hash, "initial": result.initial, "final": result.final}
    )
    df = DataProcessor.format_loss_history(result.history)
    DataProcessor.write_csv(df, ctx.path("adapter_history.csv"), ctx.config_hash)
    if ctx.figures:
        _plot(df, "epoch", ["total", "l_m", "l_ei", "l_iu"], ctx.path("adapter_history.png"), "Adapter training")
    return {"initial": result.initial, "final": result.final}


def _run_tta(ctx: RunContext, model: AdaptedModel) -> Tuple[MetricsReport, List[pd.DataFrame]]:
    mask = load_mask(ctx)
    cubes, measurements = load_split(ctx, "target-test", mask)
    references = [torch.from_numpy(c) for c in cubes]
    results = adapt_all(model, measurements, mask, ctx.cfg.tta, references)
    report = score_scenes([r.reconstruction for r in results], cubes)
    traces = [DataProcessor.format_tta_trace(r.trace, sample=i) for i, r in enumerate(results)]
    return report, traces


def tta_command(ctx: RunContext) -> Dict[str, Any]:
    model = load_model(ctx, "adapted")
    report, traces = _run_tta(ctx, model)

    DataProcessor.write_csv(pd.concat(traces, ignore_index=True), ctx.path("tta_trace.csv"), ctx.config_hash)
    mean = DataProcessor.mean_trace(traces)
    DataProcessor.write_csv(mean, ctx.path("tta_mean_trace.csv"), ctx.config_hash)
    write_json(ctx.path("tta_metrics.json"), {**report.to_dict(), "tta": ctx.cfg.tta.to_dict()}, ctx.config_hash)
    if ctx.figures:
        _plot(mean, "iteration", ["psnr"], ctx.path("tta_psnr.png"), "PSNR vs TTA iterations")
        _plot(mean, "iteration", ["total", "best_loss"], ctx.path("tta_loss.png"), "L_tta vs iterations")
    logger.info(f"TTA on {len(traces)} samples: mean PSNR {report.mean_psnr:.2f} dB")
    return report.to_dict()


def evaluate_command(ctx: RunContext) -> Dict[str, Any]:
    name = ctx.options.get("model", "adapted")
    split = ctx.options.get("split", "target-test")
    model = load_model(ctx, name)
    mask = load_mask(ctx)
    cubes, measurements = load_split(ctx, split, mask)
    report = evaluate_model(model, measurements, mask, cubes)

    write_json(ctx.path("metrics.json"), {**report.to_dict(), "model": name, "split": split}, ctx.config_hash)
    DataProcessor.write_csv(DataProcessor.format_metrics(report), ctx.path("metrics.csv"), ctx.config_hash)
    logger.info(f"{name} on {split}: {report.mean_psnr:.2f} dB / SSIM {report.mean_ssim:.4f}")
    return report.to_dict()


def _ablation_row(ctx: RunContext, row: str, model: torch.nn.Module, stages: int,
                  adapters_on: bool, tta_on: bool, report: MetricsReport) -> Dict[str, Any]:
    stats = model_stats(model, ctx.cfg.height, ctx.cfg.width)
    logger.info(f"Ablation row {row}: {report.mean_psnr:.2f} dB")
    return {
        "row": row, "stages": stages, "adapters_on": adapters_on, "tta_on": tta_on,
        "psnr": report.mean_psnr, "ssim": report.mean_ssim,
        "params": stats.param_count, "macs": stats.mac_estimate,
    }


def ablate(ctx: RunContext) -> Dict[str, Any]:
    """
    Stage/adapter/TTA ablation on the target test split.

    Rows a/b are the teacher without and with adapters; each depth in
    ``data.ablation_stages`` adds student rows without adapters, with trained
    adapters, and with adapters plus TTA.
    """
    cfg = ctx.cfg
    mask = load_mask(ctx)
    cubes, measurements = load_split(ctx, "target-test", mask)

    def score(model):
        return evaluate_model(model, measurements, mask, cubes)

    teacher = load_model(ctx, "teacher")
    rows = [_ablation_row(ctx, "a", teacher, cfg.teacher_stages, False, False, score(teacher))]
    adapted_teacher, _ = _train_adapters(ctx, teacher)
    rows.append(_ablation_row(ctx, "b", adapted_teacher, cfg.teacher_stages, True, False, score(adapted_teacher)))

    labels = iter("cdefghijklmnopqrstuvwxyz")
    for stages in cfg.data.ablation_stages:
        student, _ = _distill_student(ctx, load_model(ctx, "teacher"), stages)
        rows.append(_ablation_row(ctx, next(labels), student, stages, False, False, score(student)))
        adapted, _ = _train_adapters(ctx, student)
        rows.append(_ablation_row(ctx, next(labels), adapted, stages, True, False, score(adapted)))
        tta_report, _ = _run_tta(ctx, adapted)
        rows.append(_ablation_row(ctx, next(labels), adapted, stages, True, True, tta_report))

    df = DataProcessor.format_ablation(rows)
    DataProcessor.write_csv(df, ctx.path("ablation.csv"), ctx.config_hash)
    return {"rows": rows}


def wiener_lab_command(ctx: RunContext) -> Dict[str, Any]:
    result = run_wiener_lab(ctx.cfg.wiener)
    df = DataProcessor.format_filter_comparison(result.learned, result.closed_form.response)
    DataProcessor.write_csv(df, ctx.path("wiener_filter.csv"), ctx.config_hash)
    write_json(ctx.path("wiener_summary.json"), result.summary(), ctx.config_hash)
    if ctx.figures:
        first = df[(df["channel"] == 0) & (df["k1"] == 0)]
        _plot(first, "k2", ["learned", "closed_form"], ctx.path("wiener_filter.png"), "Frequency response, k1 = 0")
    return result.summary()


def stats_command(ctx: RunContext) -> Dict[str, Any]:
    """Parameters and MACs of teacher, student and student + adapters."""
    cfg = ctx.cfg
    try:
        teacher = load_model(ctx, "teacher")
    except MissingArtifactError:
        teacher = build_model(cfg.teacher_stages, cfg.bands, cfg.sensing.shift, cfg.denoiser, cfg.seed)
    student = make_student(teacher, cfg.student_stages, "random", cfg.seed + 1)
    adapted = attach_adapters(student, cfg.adapter_init, cfg.seed + 2)

    rows = []
    for name, model in (("teacher", teacher), ("student", student), ("student+adapters", adapted)):
        stats = model_stats(model, cfg.height, cfg.width)
        rows.append({"model": name, "params": stats.param_count, "macs": stats.mac_estimate})
    df = pd.DataFrame(rows)
    df["param_ratio"] = df["params"] / df.loc[0, "params"]
    df["mac_ratio"] = df["macs"] / df.loc[0, "macs"]

    DataProcessor.write_csv(df, ctx.path("stats.csv"), ctx.config_hash)
    summary = {"models": df.to_dict(orient="records"), "adapter_lightweight": adapted.is_lightweight()}
    write_json(ctx.path("stats.json"), summary, ctx.config_hash)
    logger.info(f"student+adapters / teacher params: {df.loc[2, 'param_ratio']:.3f}")
    return summary


COMMANDS: Dict[str, Callable[[RunContext], Dict[str, Any]]] = {
    "gen-data": gen_data,
    "train-slow": train_slow,
    "distill": distill_command,
    "train-adapters": train_adapters_command,
    "tta": tta_command,
    "evaluate": evaluate_command,
    "ablate": ablate,
    "wiener-lab": wiener_lab_command,
    "stats": stats_command,
}


def run(command: str, ctx: RunContext) -> Dict[str, Any]:
    """Run one pipeline command and record the resolved config next to its outputs."""
    if command not in COMMANDS:
        raise KeyError(f"unknown command '{command}', expected one of {sorted(COMMANDS)}")
    ctx.out.mkdir(parents=True, exist_ok=True)
    ctx.cfg.dump(ctx.path("config.json"))
    logger.info(f"Running {command} (config {ctx.config_hash[:12]}) into {ctx.out}")
    return COMMANDS[command](ctx)
