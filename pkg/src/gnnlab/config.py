"""Experiment configuration: strict JSON round-tripping for reproducible runs.

Unknown keys are rejected everywhere; a typo in a config file should fail
loudly rather than silently run a different experiment.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .graphdata import DEFAULT_DEGREE_CAP, DEFAULT_FOLD_SEED, FEATURE_POLICIES
from .models import ModelSpec
from .training import TrainConfig


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    path: str | None = None          # local dir with raw TU files; skips fetching
    url_base: str | None = None      # fetch source override
    cache_dir: str | None = None     # cache override (GNNLAB_CACHE also applies)
    feature_policy: str | None = None  # None = attributes > label > degree
    degree_cap: int = DEFAULT_DEGREE_CAP

    def __post_init__(self):
        if self.feature_policy is not None and self.feature_policy not in FEATURE_POLICIES:
            raise ConfigError(f"unknown feature policy {self.feature_policy!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "path": self.path, "url_base": self.url_base,
                "cache_dir": self.cache_dir, "feature_policy": self.feature_policy,
                "degree_cap": self.degree_cap}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        known = {"name", "path", "url_base", "cache_dir", "feature_policy", "degree_cap"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown dataset key(s): {sorted(unknown)}")
        if "name" not in d:
            raise ConfigError("dataset config needs a 'name'")
        return cls(**d)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    model: ModelSpec
    train: TrainConfig = field(default_factory=TrainConfig)
    fold_count: int = 10
    fold_seed: int = DEFAULT_FOLD_SEED
    diagnostics: bool = True
    out_dir: str = "out"

    def __post_init__(self):
        if self.fold_count < 2:
            raise ConfigError(f"fold count must be at least 2, got {self.fold_count}")

    def to_dict(self) -> dict:
        return {"dataset": self.dataset.to_dict(), "model": self.model.to_dict(),
                "train": self.train.to_dict(),
                "folds": {"count": self.fold_count, "seed": self.fold_seed},
                "diagnostics": self.diagnostics, "out_dir": self.out_dir}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"dataset", "model", "train", "folds", "diagnostics", "out_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        for section in ("dataset", "model"):
            if section not in d:
                raise ConfigError(f"config needs a '{section}' section")
        kwargs = {
            "dataset": DatasetConfig.from_dict(d["dataset"]),
            "model": ModelSpec.from_dict(d["model"]),
        }
        if "train" in d:
            kwargs["train"] = TrainConfig.from_dict(d["train"])
        if "folds" in d:
            folds = d["folds"]
            unknown = set(folds) - {"count", "seed"}
            if unknown:
                raise ConfigError(f"unknown folds key(s): {sorted(unknown)}")
            if "count" in folds:
                kwargs["fold_count"] = folds["count"]
            if "seed" in folds:
                kwargs["fold_seed"] = folds["seed"]
        if "diagnostics" in d:
            kwargs["diagnostics"] = bool(d["diagnostics"])
        if "out_dir" in d:
            kwargs["out_dir"] = d["out_dir"]
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
