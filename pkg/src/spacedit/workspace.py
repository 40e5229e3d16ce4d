"""Workspace layout and validated run configuration.

A workspace is a directory with five fixed subdirectories; every CLI
command and the HTTP service read and write artifacts under it. The root
comes from (in order) an explicit argument, the SPACEDIT_WORKSPACE
environment variable, or ./workspace.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .inversion import InversionConfig
from .training import TrainConfig

WORKSPACE_ENV = "SPACEDIT_WORKSPACE"
SUBDIRS = ("datasets", "checkpoints", "indexes", "embedders", "sessions", "reports")


@dataclass(frozen=True)
class Workspace:
    root: Path

    @property
    def datasets(self) -> Path:
        return self.root / "datasets"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def indexes(self) -> Path:
        return self.root / "indexes"

    @property
    def embedders(self) -> Path:
        return self.root / "embedders"

    @property
    def sessions(self) -> Path:
        return self.root / "sessions"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    def ensure(self) -> "Workspace":
        for name in SUBDIRS:
            (self.root / name).mkdir(parents=True, exist_ok=True)
        return self


def resolve_workspace(path: str | Path | None = None) -> Workspace:
    if path is None:
        path = os.environ.get(WORKSPACE_ENV, "workspace")
    return Workspace(Path(path)).ensure()


@dataclass(frozen=True)
class DatasetConfig:
    n_pairs: int = 2000
    seed: int = 11
    resolution: int = 32
    family_cycle: bool = True

    def __post_init__(self) -> None:
        if self.n_pairs < 10:
            raise ValueError("n_pairs must be >= 10")
        if self.resolution < 8:
            raise ValueError("resolution must be >= 8")


@dataclass(frozen=True)
class LgieConfig:
    embedder_steps: int = 400
    mapper_steps: int = 400
    zero_shot_steps: int = 120
    lam: float = 0.3

    def __post_init__(self) -> None:
        if min(self.embedder_steps, self.mapper_steps, self.zero_shot_steps) < 1:
            raise ValueError("step counts must be positive")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")


@dataclass(frozen=True)
class MetricsConfig:
    feature_seed: int = 0
    n_diversity_samples: int = 10


@dataclass
class RunConfig:
    """Top-level configuration; unknown keys anywhere are rejected."""

    workspace: Path = field(default_factory=lambda: resolve_workspace().root)
    seed: int = 0
    device: str = "cpu"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    lgie: LgieConfig = field(default_factory=LgieConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    _SECTIONS = {
        "dataset": DatasetConfig,
        "train": TrainConfig,
        "inversion": InversionConfig,
        "lgie": LgieConfig,
        "metrics": MetricsConfig,
    }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        for key, value in data.items():
            if key in cls._SECTIONS:
                kwargs[key] = _section_from_dict(cls._SECTIONS[key], key, value)
            elif key == "workspace":
                kwargs[key] = Path(value)
            else:
                kwargs[key] = value
        if "device" in kwargs and kwargs["device"] not in ("cpu", "cuda"):
            raise ValueError(f"unknown device {kwargs['device']!r}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["workspace"] = str(self.workspace)
        out["inversion"].pop("w_init", None)  # array, not JSON-portable
        return out


def _section_from_dict(section_cls, name: str, value) -> object:
    if not isinstance(value, dict):
        raise ValueError(f"config section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(section_cls)}
    unknown = set(value) - known
    if unknown:
        raise ValueError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
    return section_cls(**value)
