"""
Experiment configuration: one JSON document covering sensing, models,
schedules and data, with two shipped presets.

A config file only needs the fields it changes; everything else comes from
the selected preset. Unknown keys are rejected by name.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from analysis.wiener_lab import WienerLabConfig
from config import DEFAULT_PRESET, OUTPUT_DIR, PRESETS
from imaging.cassi import SensingConfig
from imaging.synthetic import SyntheticConfig
from models.adapters import ADAPTER_INITS
from models.unfolding import DenoiserConfig
from training.configs import SSTConfig, TTAConfig, TrainConfig
from training.transforms import TransformSpec
from utils.errors import ConfigError

logger = logging.getLogger("sfsci.pipeline")

STUDENT_INITS = ("random", "from_teacher")


@dataclass(frozen=True)
class DataConfig:
    """Source/target generators plus how the scenes are split and measured."""

    source: SyntheticConfig = field(default_factory=SyntheticConfig)
    target: SyntheticConfig = field(
        default_factory=lambda: SyntheticConfig(spectral_rank=6, spectral_smoothness=0.5, spatial_smoothness=2.0, seed=1)
    )
    distill_count: int = 20
    test_count: int = 10
    mask_density: float = 0.5
    ablation_stages: Tuple[int, ...] = (1, 2)

    def __post_init__(self):
        src, tgt = self.source, self.target
        if (src.height, src.width, src.bands) != (tgt.height, tgt.width, tgt.bands):
            raise ConfigError("data.target", "must share height, width and bands with data.source")
        if self.distill_count < 1:
            raise ConfigError("data.distill_count", "must be >= 1")
        if not 1 <= self.test_count < tgt.count:
            raise ConfigError(
                "data.test_count",
                f"must be in [1, target.count) so some target scenes remain for adapter training, got {self.test_count}"
            )
        if not 0.0 <= self.mask_density <= 1.0:
            raise ConfigError("data.mask_density", f"must lie in [0, 1], got {self.mask_density}")
        if not self.ablation_stages or any(k < 1 for k in self.ablation_stages):
            raise ConfigError("data.ablation_stages", "must list stage counts >= 1")

    @property
    def distill(self) -> SyntheticConfig:
        """Unlabeled source-domain scenes the teacher never saw."""
        return replace(self.source, count=self.distill_count, seed=self.source.seed + 1000)


@dataclass(frozen=True)
class ExperimentConfig:
    sensing: SensingConfig = field(default_factory=lambda: SensingConfig(shift=1, noise="shot", bits=11))
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    teacher_stages: int = 9
    student_stages: int = 2
    student_init: str = "random"
    adapter_init: str = "zero_residual"
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=40))
    distill: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=60))
    sst: SSTConfig = field(default_factory=SSTConfig)
    tta: TTAConfig = field(default_factory=TTAConfig)
    data: DataConfig = field(default_factory=DataConfig)
    wiener: WienerLabConfig = field(default_factory=WienerLabConfig)
    seed: int = 0
    output_dir: str = str(OUTPUT_DIR)

    def __post_init__(self):
        if self.student_stages < 1:
            raise ConfigError("student_stages", f"must be >= 1, got {self.student_stages}")
        if self.teacher_stages < self.student_stages:
            raise ConfigError(
                "teacher_stages",
                f"must be >= student_stages ({self.student_stages}), got {self.teacher_stages}"
            )
        if self.student_init not in STUDENT_INITS:
            raise ConfigError("student_init", f"must be one of {STUDENT_INITS}, got '{self.student_init}'")
        if self.adapter_init not in ADAPTER_INITS:
            raise ConfigError("adapter_init", f"must be one of {ADAPTER_INITS}, got '{self.adapter_init}'")
        if self.seed < 0:
            raise ConfigError("seed", "must be an unsigned integer")
        if any(k > self.teacher_stages for k in self.data.ablation_stages):
            raise ConfigError("data.ablation_stages", f"entries must not exceed teacher_stages ({self.teacher_stages})")
        self.sst.transforms.check_shape(self.height, self.width, "sst.transforms.group")
        self.tta.transforms.check_shape(self.height, self.width, "tta.transforms.group")

    @property
    def bands(self) -> int:
        return self.data.source.bands

    @property
    def height(self) -> int:
        return self.data.source.height

    @property
    def width(self) -> int:
        return self.data.source.width

    def to_dict(self) -> Dict[str, Any]:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, data: Dict[str, Any], preset: str = DEFAULT_PRESET) -> "ExperimentConfig":
        """
        Build a config from a (partial) dict layered over a preset.

        Args:
            data: Fields to override, nested like ``to_dict()``
            preset: Base preset name

        Returns:
            Validated ExperimentConfig
        """
        merged = _merge(preset_config(preset).to_dict(), data, "")
        return _build(cls, merged, "")

    @classmethod
    def load(cls, path: Union[str, Path], preset: str = DEFAULT_PRESET) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError("config", f"no config file at {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"malformed JSON in {path}: {e}")
        logger.info(f"Loaded config {path} over preset '{preset}'")
        return cls.from_dict(data, preset)

    def dump(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON, output location excluded."""
        data = self.to_dict()
        data.pop("output_dir")
        return _digest(data)

    def data_hash(self) -> str:
        """Hash of everything that determines the stored scenes, the mask and the simulated measurements."""
        data = self.to_dict()
        data["data"].pop("ablation_stages")
        return _digest({"sensing": data["sensing"], "data": data["data"], "seed": data["seed"]})

    def arch_hash(self) -> str:
        """Hash of everything that determines model tensor shapes."""
        return _digest({
            "shift": self.sensing.shift,
            "bands": self.bands,
            "denoiser": self.denoiser.to_dict(),
            "teacher_stages": self.teacher_stages,
            "student_stages": self.student_stages,
        })

    def resolved_output_dir(self, override: Optional[Union[str, Path]] = None) -> Path:
        """``--out`` beats ``SFSCI_OUT``, which beats the config's own output_dir."""
        return Path(override or os.getenv("SFSCI_OUT") or self.output_dir)


def _digest(data: Dict[str, Any]) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


NESTED = {
    ExperimentConfig: {
        "sensing": SensingConfig,
        "denoiser": DenoiserConfig,
        "train": TrainConfig,
        "distill": TrainConfig,
        "sst": SSTConfig,
        "tta": TTAConfig,
        "data": DataConfig,
        "wiener": WienerLabConfig,
    },
    SSTConfig: {"iu_noise": SensingConfig, "transforms": TransformSpec},
    TTAConfig: {"transforms": TransformSpec},
    DataConfig: {"source": SyntheticConfig, "target": SyntheticConfig},
}


def _name(prefix: str, key: str) -> str:
    return f"{prefix}.{key}" if prefix else key


def _merge(base: Dict[str, Any], override: Dict[str, Any], prefix: str) -> Dict[str, Any]:
    if not isinstance(override, dict):
        raise ConfigError(prefix or "config", "must be a JSON object")
    merged = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(_name(prefix, key), "unknown key")
        if isinstance(base[key], dict):
            merged[key] = _merge(base[key], value, _name(prefix, key))
        else:
            merged[key] = value
    return merged


def _build(cls, data: Dict[str, Any], prefix: str):
    known = {f.name for f in fields(cls) if f.init}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(_name(prefix, unknown[0]), "unknown key")

    kwargs = {}
    for key, value in data.items():
        nested = NESTED.get(cls, {}).get(key)
        if nested is not None:
            value = _build(nested, value, _name(prefix, key))
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(prefix or "config", str(e))


def desk_preset() -> ExperimentConfig:
    """64x64x8, d=1, shortened schedules."""
    return ExperimentConfig()


def paper_geometry_preset() -> ExperimentConfig:
    """256x256x28, d=2 with the full-length schedules."""
    source = SyntheticConfig(height=256, width=256, bands=28, spatial_smoothness=8.0,
                             spectral_rank=3, spectral_smoothness=6.0, count=20, seed=0)
    target = SyntheticConfig(height=256, width=256, bands=28, spatial_smoothness=4.0,
                             spectral_rank=10, spectral_smoothness=1.0, count=20, seed=1)
    return ExperimentConfig(
        sensing=SensingConfig(shift=2, noise="shot", bits=11),
        denoiser=DenoiserConfig(base_channels=64, depth=5),
        train=TrainConfig(epochs=300, batch_size=2, lr_init=4e-4),
        distill=TrainConfig(epochs=200, batch_size=2, lr_init=4e-4),
        sst=SSTConfig(epochs=100, lr=1e-4),
        tta=TTAConfig(lam=0.7, iters=50, lr=1e-3),
        data=DataConfig(source=source, target=target, distill_count=20, test_count=10),
    )


def preset_config(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"must be one of {PRESETS}, got '{name}'")
    return desk_preset() if name == "desk" else paper_geometry_preset()


def resolve_config(
    config_path: Optional[Union[str, Path]] = None,
    preset: str = DEFAULT_PRESET,
    seed: Optional[int] = None
) -> ExperimentConfig:
    """Preset, then config file, then ``--seed``."""
    cfg = ExperimentConfig.load(config_path, preset) if config_path else preset_config(preset)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg
