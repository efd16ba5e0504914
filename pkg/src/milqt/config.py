"""Training / model configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .hypotheses import FUSION_OPS, KINDS
from .interaction import MODES


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    seed: int = 0
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 30
    alpha: tuple[float, float, float] = (1.0, 1.0, 1.0)
    fusion: str = "EWM"
    prior: bool = True
    h_mode: str = "predicted"  # or "groundtruth"
    hypotheses: tuple[str, ...] = ("topdown", "bilinear_lowrank")
    hypothesis_views: tuple[tuple[int, ...] | None, ...] | None = None
    interaction: str = "learned"
    softmax_over_j: bool = False
    stop_gradient_h: bool = False
    inference_weighting: bool = True
    d_w: int = 32
    d_h: int = 48
    d_f: int = 48
    rank: int = 16
    grad_clip: float = 5.0
    log_every: int = 10
    eval_batch_size: int = 256
    checkpoint_every_epoch: bool = True

    def __post_init__(self):
        self.alpha = tuple(float(a) for a in self.alpha)
        self.hypotheses = tuple(self.hypotheses)
        if self.hypothesis_views is not None:
            self.hypothesis_views = tuple(None if v is None else tuple(int(d) for d in v)
                                          for v in self.hypothesis_views)
        self.validate()

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if len(self.alpha) != 3 or any(a < 0 for a in self.alpha) or not any(a > 0 for a in self.alpha):
            raise ConfigError(f"alpha must be three non-negative weights, one > 0; got {self.alpha}")
        if self.fusion not in FUSION_OPS:
            raise ConfigError(f"fusion must be one of {FUSION_OPS}")
        if self.h_mode not in ("predicted", "groundtruth"):
            raise ConfigError("h_mode must be 'predicted' or 'groundtruth'")
        if not self.hypotheses or any(k not in KINDS for k in self.hypotheses):
            raise ConfigError(f"hypotheses must be a non-empty list drawn from {KINDS}")
        if self.interaction not in MODES:
            raise ConfigError(f"interaction must be one of {MODES}")
        if self.interaction == "single" and len(self.hypotheses) != 1:
            raise ConfigError("interaction 'single' needs exactly one hypothesis")
        if self.hypothesis_views is not None and len(self.hypothesis_views) != len(self.hypotheses):
            raise ConfigError("hypothesis_views needs one entry per hypothesis")
        if self.fusion != "none" and self.d_f < 1:
            raise ConfigError("d_f must be >= 1")
        if min(self.d_w, self.d_h, self.d_f, self.rank) < 1:
            raise ConfigError("widths must be >= 1")

    @property
    def J(self) -> int:
        return len(self.hypotheses)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = list(self.alpha)
        d["hypotheses"] = list(self.hypotheses)
        if self.hypothesis_views is not None:
            d["hypothesis_views"] = [None if v is None else list(v) for v in self.hypothesis_views]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "TrainConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def replace(self, **changes) -> "TrainConfig":
        d = self.to_dict()
        d.update(changes)
        return TrainConfig.from_dict(d)
