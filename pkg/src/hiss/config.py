"""Run configuration: one JSON document composing task, model, and training settings."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .data import KINDS as TASK_KINDS
from .data import TaskSpec, Trajectory, generate, load, split
from .errors import ConfigError, IoError
from .hierarchy import ModelSpec
from .layers import KINDS as LAYER_KINDS
from .train import TrainConfig

_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

_stack = {
    "type": ["object", "null"],
    "additionalProperties": False,
    "required": ["kind", "depth", "width", "d_in", "d_out"],
    "properties": {
        "kind": {"enum": list(LAYER_KINDS)},
        "depth": {"type": "integer", "minimum": 1},
        "width": {"type": "integer", "minimum": 1},
        "d_in": {"type": "integer", "minimum": 1},
        "d_out": {"type": "integer", "minimum": 1},
        "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "state_dim": {"type": "integer", "minimum": 1},
        "mode": {"type": ["string", "null"]},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "train"],
    "properties": {
        "out": {"type": "string"},
        "data_dir": {"type": "string"},
        "task": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(TASK_KINDS)},
                "n": {"type": "integer", "minimum": 1},
                "duration_s": _pair,
                "sensor_hz": {"type": "number", "exclusiveMinimum": 0},
                "output_hz": {"type": "number", "exclusiveMinimum": 0},
                "waypoints": _pair,
                "pause_s": _pair,
                "mixing": {"enum": ["random", "identity"]},
                "noise": {"type": "number", "minimum": 0},
                "drift": {"type": "number", "minimum": 0},
                "vibration": {"type": "number", "minimum": 0},
                "vibration_hz": _pair,
                "seed": {"type": "integer"},
            },
        },
        "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "stride"],
            "properties": {
                "kind": {"enum": ["flat", "hiss"]},
                "stride": {"type": "integer", "minimum": 1},
                "stack": _stack, "low": _stack, "high": _stack,
                "k": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 1},
                "lr": {"type": "number", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "clip_norm": {"type": "number", "exclusiveMinimum": 0},
                "optimizer": {"enum": ["adam"]},
                "fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "preprocess": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "resting_warmup": {"type": ["integer", "null"], "minimum": 1},
                        "diffs": {"type": "boolean"},
                        "filter": {
                            "type": ["object", "null"],
                            "additionalProperties": False,
                            "required": ["cutoff_hz"],
                            "properties": {"order": {"type": "integer", "minimum": 1},
                                           "cutoff_hz": {"type": "number", "exclusiveMinimum": 0}},
                        },
                    },
                },
            },
        },
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "ablation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "chunk_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "cutoffs_hz": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "filter_order": {"type": "integer", "minimum": 1},
                "fractions": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                              "minItems": 1},
            },
        },
    },
}

DEFAULT_ABLATION = {"chunk_sizes": [1, 5, 10, 15], "cutoffs_hz": [0.75, 2.5, 7.5], "filter_order": 5,
                    "fractions": [0.3, 0.5, 1.0]}


@dataclass
class RunConfig:
    model: ModelSpec
    train: TrainConfig
    task: TaskSpec | None = None
    data_dir: str | None = None
    out: str = "runs"
    train_fraction: float = 0.8
    seeds: list[int] = field(default_factory=lambda: [0])
    ablation: dict = field(default_factory=lambda: dict(DEFAULT_ABLATION))

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        if "task" not in raw and "data_dir" not in raw:
            raise ConfigError("config needs either 'task' or 'data_dir'")
        abl = dict(DEFAULT_ABLATION)
        abl.update(raw.get("ablation", {}))
        return cls(
            model=ModelSpec.from_dict(raw["model"]),
            train=TrainConfig.from_dict(raw["train"]),
            task=TaskSpec.from_dict(raw["task"]) if "task" in raw else None,
            data_dir=raw.get("data_dir"),
            out=raw.get("out", "runs"),
            train_fraction=raw.get("train_fraction", 0.8),
            seeds=list(raw.get("seeds", [raw["train"].get("seed", 0)])),
            ablation=abl,
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise IoError(f"config file not found: {path}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON (line {exc.lineno}): {exc.msg}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = {"model": self.model.to_dict(), "train": self.train.to_dict(), "out": self.out,
             "train_fraction": self.train_fraction, "seeds": list(self.seeds),
             "ablation": copy.deepcopy(self.ablation)}
        if self.task is not None:
            d["task"] = self.task.to_dict()
        if self.data_dir is not None:
            d["data_dir"] = self.data_dir
        return d

    def with_train(self, **changes) -> "RunConfig":
        t = self.train.to_dict()
        t.update(changes)
        other = copy.copy(self)
        other.train = TrainConfig.from_dict(t)
        return other

    def dataset(self) -> tuple[list[Trajectory], list[Trajectory]]:
        """(train, val) trajectories from ``data_dir`` (stored split) or a generated task."""
        if self.data_dir is not None:
            manifest, trajs = load(self.data_dir)
            by_id = {t.id: t for t in trajs}
            if manifest.split:
                train_ids, val_ids = manifest.ids_in("train"), manifest.ids_in("val")
            else:
                train_ids, val_ids = split(manifest.ids, self.train_fraction, manifest.seed)
        else:
            trajs = generate(self.task)
            by_id = {t.id: t for t in trajs}
            train_ids, val_ids = split(list(by_id), self.train_fraction, self.task.seed)
        return [by_id[i] for i in train_ids], [by_id[i] for i in val_ids]
