"""Pipeline configuration: one JSON document, overridable by CLI flags."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .exceptions import SchemaError
from .io import SCHEMA_VERSION
from .pipeline import InferenceConfig
from .posenet.estimator import TrainConfig
from .synth import AugmentConfig


@dataclass
class ModelConfig:
    widths: tuple = (32, 64, 128)
    conditional: bool = True
    heatmap_supervision: bool = True
    anchor_sigma: float = 0.05
    sigma_voxels: float = 1.5

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) != 3 or min(self.widths) < 1:
            raise ValueError("widths must be three positive integers")
        if self.anchor_sigma <= 0 or self.sigma_voxels <= 0:
            raise ValueError("anchor_sigma and sigma_voxels must be positive")


@dataclass
class PipelineConfig:
    rig: str | None = None
    dataset: str | None = None
    checkpoint: str | None = None
    output: str | None = None
    seed: int = 0
    deterministic: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"]["widths"] = list(self.model.widths)
        return {"schema_version": SCHEMA_VERSION, **d}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise SchemaError("config must be a JSON object", field="<document>")
        version = doc.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {version}", field="schema_version")
        sections = dict(train=TrainConfig, augment=AugmentConfig, inference=InferenceConfig, model=ModelConfig)
        top = {f.name for f in fields(cls)}
        kw = {}
        for key, value in doc.items():
            if key == "schema_version":
                continue
            if key not in top:
                raise SchemaError(f"unknown field {key}", field=key)
            if key in sections:
                known = {f.name for f in fields(sections[key])}
                if not isinstance(value, dict):
                    raise SchemaError("must be an object", field=key)
                for k in value:
                    if k not in known:
                        raise SchemaError(f"unknown field {key}.{k}", field=f"{key}.{k}")
                try:
                    kw[key] = sections[key](**value)
                except (TypeError, ValueError) as e:
                    raise SchemaError(str(e), field=key) from e
            else:
                kw[key] = value
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: not valid JSON ({e})", field="<document>") from e
        return cls.from_dict(doc)
