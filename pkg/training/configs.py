"""
Hyperparameter records for slow learning, adapter training and test-time adaptation.

Defaults follow the desk preset; pipeline/experiment.py holds both presets.
"""

from dataclasses import asdict, dataclass, field

from imaging.cassi import SensingConfig
from training.transforms import TransformSpec
from utils.errors import ConfigError

LR_SCHEDULES = ("constant", "cosine_annealing")
TTA_MODES = ("episodic", "online")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 2
    lr_init: float = 4e-4
    lr_schedule: str = "cosine_annealing"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("train.epochs", f"must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size", f"must be >= 1, got {self.batch_size}")
        if not self.lr_init > 0:
            raise ConfigError("train.lr_init", f"must be > 0, got {self.lr_init}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError("train.lr_schedule", f"must be one of {LR_SCHEDULES}, got '{self.lr_schedule}'")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SSTConfig:
    """Self-supervised adapter training: L_m + w1*L_ei + w2*L_iu + w3*L_tv."""

    w1: float = 0.7
    w2: float = 0.4
    w3: float = 0.001
    epochs: int = 100
    batch_size: int = 2
    lr: float = 1e-4
    seed: int = 0
    ei_loss: str = "ei"
    iu_loss: str = "iu"
    iu_noise: SensingConfig = field(default_factory=lambda: SensingConfig(noise="shot", bits=8))
    transforms: TransformSpec = field(default_factory=TransformSpec)

    def __post_init__(self):
        for name in ("w1", "w2", "w3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"sst.{name}", "must be >= 0")
        if self.epochs < 0:
            raise ConfigError("sst.epochs", "must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("sst.batch_size", "must be >= 1")
        if not self.lr > 0:
            raise ConfigError("sst.lr", "must be > 0")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["transforms"] = self.transforms.to_dict()
        return data


@dataclass(frozen=True)
class TTAConfig:
    """Per-sample adaptation: L_tta = L_im + lam * L_ker."""

    lam: float = 0.7
    iters: int = 50
    lr: float = 1e-3
    seed: int = 0
    mode: str = "episodic"
    transforms: TransformSpec = field(default_factory=TransformSpec)

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("tta.lam", f"must be >= 0, got {self.lam}")
        if self.iters < 0:
            raise ConfigError("tta.iters", f"must be >= 0, got {self.iters}")
        if not self.lr > 0:
            raise ConfigError("tta.lr", f"must be > 0, got {self.lr}")
        if self.mode not in TTA_MODES:
            raise ConfigError("tta.mode", f"must be one of {TTA_MODES}, got '{self.mode}'")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["transforms"] = self.transforms.to_dict()
        return data
