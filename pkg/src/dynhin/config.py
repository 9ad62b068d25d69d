"""Run configuration: one JSON file with a flat hyperparameter section."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .errors import DataError
from .training import Hyperparams

TASKS = ("classification", "recommendation")

CACHE_DIR_ENV = "DYNHIN_CACHE_DIR"


@dataclass
class RunConfig:
    task: str
    schema_path: str
    edges_path: str
    output_dir: str
    views: list[str]
    labels_path: Optional[str] = None
    label_node_type: Optional[str] = None
    interaction_edge_type: Optional[str] = None
    cache_dir: Optional[str] = None
    train_fraction: float = 0.3
    workers: int = 1
    hyper: Hyperparams = field(default_factory=Hyperparams)

    def validate(self, check_files: bool = True) -> None:
        if self.task not in TASKS:
            raise DataError(f"task must be one of {TASKS}, got {self.task!r}")
        if not self.views:
            raise DataError("at least one meta-path view is required")
        if self.task == "classification":
            if not self.labels_path or not self.label_node_type:
                raise DataError("classification needs labels_path and label_node_type")
        else:
            if not self.interaction_edge_type:
                raise DataError("recommendation needs interaction_edge_type")
        if self.workers < 1:
            raise DataError("workers must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must be in (0, 1)")
        self.hyper.validate()
        if check_files:
            required = [self.schema_path, self.edges_path]
            if self.labels_path:
                required.append(self.labels_path)
            for p in required:
                if not os.path.isfile(p):
                    raise DataError(f"input file not found: {p}")

    def effective_cache_dir(self) -> str:
        env = os.environ.get(CACHE_DIR_ENV)
        if env:
            return env
        if self.cache_dir:
            return self.cache_dir
        return os.path.join(self.output_dir, "cache")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["hyperparams"] = out.pop("hyper")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        hyper_data = data.pop("hyperparams", {})
        known_hyper = {f.name for f in dataclasses.fields(Hyperparams)}
        unknown = set(hyper_data) - known_hyper
        if unknown:
            raise DataError(f"unknown hyperparameter keys: {sorted(unknown)}")
        known_cfg = {f.name for f in dataclasses.fields(cls)} - {"hyper"}
        extra = set(data) - known_cfg
        if extra:
            raise DataError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(hyper=Hyperparams(**hyper_data), **data)
        except TypeError as exc:
            raise DataError(f"bad config: {exc}") from None

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise DataError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(data)
