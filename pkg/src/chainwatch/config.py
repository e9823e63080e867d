"""One config object for the whole pipeline, JSON in and out.

The file is organized in sections so stage manifests can snapshot the
exact knobs a run used:

    {
      "seed": 0,
      "horizon_hours": 200,
      "synth": { ... optional generator spec ... },
      "paths": { ... transfer-path tracing ... },
      "selection": { ... feature selection ... },
      "statuses": { ... segmentation and clustering ... },
      "model": { ... architecture ... },
      "training": { ... optimizer and loss ... },
      "evaluation": { ... split and spy fractions ... }
    }

Every section is optional; omitted keys keep their defaults. Unknown
keys are rejected so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError
from .featsel import SelectionConfig
from .model import LossWeights, ModelConfig, TrainConfig
from .pathtrace import PathConfig
from .statuses import DEFAULT_MIN_SEGMENT_HOURS, DEFAULT_SPLIT_THETA
from .synth import SynthSpec


@dataclass
class StatusConfig:
    eps: float | None = None   # None picks the k-distance elbow
    min_pts: int = 5
    split_theta: float = DEFAULT_SPLIT_THETA
    min_segment_hours: int = DEFAULT_MIN_SEGMENT_HOURS


@dataclass
class ArchitectureConfig:
    heads: int = 2
    blocks: int = 1
    s_min: float = 1e-3
    freeze_eps: float = 1e-12


@dataclass
class TrainingSection:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.003
    gamma1: float = 0.5
    gamma2: float = 0.1
    c_pos: float = 1.0
    c_neg: float = 1.0


@dataclass
class EvaluationConfig:
    test_fraction: float = 0.3
    spy_fraction: float = 0.15


@dataclass
class PipelineConfig:
    seed: int = 0
    horizon_hours: int = 200
    hour_seconds: int = 3600
    synth: SynthSpec | None = None
    paths: PathConfig = field(default_factory=PathConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    statuses: StatusConfig = field(default_factory=StatusConfig)
    model: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    training: TrainingSection = field(default_factory=TrainingSection)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    # -------------------------------------------------- derived objects

    def model_config(self, d_model: int, n_status_ids: int) -> ModelConfig:
        return ModelConfig(
            d_model=d_model,
            n_status_ids=n_status_ids,
            heads=self.model.heads,
            blocks=self.model.blocks,
            s_min=self.model.s_min,
            freeze_eps=self.model.freeze_eps,
        )

    def loss_weights(self) -> LossWeights:
        t = self.training
        return LossWeights(gamma1=t.gamma1, gamma2=t.gamma2,
                           c_pos=t.c_pos, c_neg=t.c_neg)

    def train_config(self, seed: int) -> TrainConfig:
        t = self.training
        return TrainConfig(epochs=t.epochs, batch_size=t.batch_size,
                           learning_rate=t.learning_rate, seed=seed,
                           weights=self.loss_weights())

    # -------------------------------------------------- serialization

    def to_json(self) -> dict:
        obj = {
            "seed": self.seed,
            "horizon_hours": self.horizon_hours,
            "hour_seconds": self.hour_seconds,
            "paths": dataclasses.asdict(self.paths),
            "selection": _selection_to_json(self.selection),
            "statuses": dataclasses.asdict(self.statuses),
            "model": dataclasses.asdict(self.model),
            "training": dataclasses.asdict(self.training),
            "evaluation": dataclasses.asdict(self.evaluation),
        }
        if self.synth is not None:
            obj["synth"] = self.synth.to_json()
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        if not isinstance(obj, dict):
            raise DataError("config must be a JSON object")
        obj = dict(obj)
        cfg = cls(
            seed=_scalar(obj, "seed", int, 0),
            horizon_hours=_scalar(obj, "horizon_hours", int, 200),
            hour_seconds=_scalar(obj, "hour_seconds", int, 3600),
        )
        if "synth" in obj:
            cfg.synth = SynthSpec.from_json(obj.pop("synth"))
        cfg.paths = _section(obj, "paths", PathConfig)
        cfg.selection = _selection_from_json(obj.pop("selection", {}))
        cfg.statuses = _section(obj, "statuses", StatusConfig)
        cfg.model = _section(obj, "model", ArchitectureConfig)
        cfg.training = _section(obj, "training", TrainingSection)
        cfg.evaluation = _section(obj, "evaluation", EvaluationConfig)
        if obj:
            raise DataError(f"unknown config keys: {sorted(obj)}")
        return cfg


def _scalar(obj: dict, key: str, kind, default):
    value = obj.pop(key, default)
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise DataError(f"config key {key!r} must be {kind.__name__}") from None


def _section(obj: dict, key: str, cls):
    raw = obj.pop(key, {})
    if not isinstance(raw, dict):
        raise DataError(f"config section {key!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"unknown keys in config section {key!r}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise DataError(f"config section {key!r}: {exc}") from None


def _selection_to_json(sel: SelectionConfig) -> dict:
    obj = dataclasses.asdict(sel)
    if obj.get("class_weights") is not None:
        obj["class_weights"] = {str(k): v for k, v in obj["class_weights"].items()}
    return obj


def _selection_from_json(raw: dict) -> SelectionConfig:
    if not isinstance(raw, dict):
        raise DataError("config section 'selection' must be an object")
    raw = dict(raw)
    weights = raw.pop("class_weights", None)
    sel = _section({"selection": raw}, "selection", SelectionConfig)
    if weights is not None:
        try:
            sel.class_weights = {int(k): float(v) for k, v in weights.items()}
        except (AttributeError, TypeError, ValueError):
            raise DataError("selection class_weights must map labels to floats") from None
    return sel


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {str(path)!r}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"config {str(path)!r} is not valid JSON: {exc}") from None
    return PipelineConfig.from_json(obj)


def write_config(config: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_json(), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
