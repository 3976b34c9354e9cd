"""Run configuration, loaded from TOML.

Schema (every section and key optional; unknown keys are rejected)::

    mode = "baseline" | "prog" | "autoprog"
    seed = 0
    out = "runs/example"
    s1 = 0.5
    growth = "mogrow"            # randinit | stacking | interpolation | identity | mogrow
                                 # (required when mode = "prog")
    momentum = 0.998

    [model]   max_depth, max_grid, patch_size, embed_dim, heads, mlp_ratio, classes
    [plan]    total_epochs, stages, supernet_epochs
    [search]  alpha ("balanced" or a number), eval_subset_size, eval_seed
    [optim]   lr, min_lr, weight_decay, warmup_epochs, batch_size
    [reg]     drop_path = [min, max], input_noise = [min, max], adareg, flip, shift
    [data]    source ("synthetic" or a directory), classes, count, eval_count, side, seed
"""
from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import tomli

from .growth import GrowthKind
from .model import ModelConfig
from .schedule import StagePlan

MODES = ("baseline", "prog", "autoprog")


@dataclass
class SearchConfig:
    alpha: str | float = "balanced"
    eval_subset_size: int = 250
    eval_seed: int = 1234

    def __post_init__(self):
        if self.eval_subset_size < 1:
            raise ValueError("eval_subset_size must be >= 1")
        if isinstance(self.alpha, str) and self.alpha != "balanced":
            raise ValueError(f"alpha must be 'balanced' or a number, got {self.alpha!r}")


@dataclass
class OptimConfig:
    lr: float = 1e-3
    min_lr: float = 1e-5
    weight_decay: float = 0.05
    warmup_epochs: int = 3
    batch_size: int = 128


@dataclass
class RegConfig:
    drop_path: tuple[float, float] = (0.0, 0.1)
    input_noise: tuple[float, float] = (0.0, 0.1)
    adareg: bool = True
    flip: bool = False
    shift: int = 2

    def __post_init__(self):
        self.drop_path = tuple(self.drop_path)
        self.input_noise = tuple(self.input_noise)


@dataclass
class DataConfig:
    source: str = "synthetic"
    classes: int = 10
    count: int = 5000
    eval_count: int = 1000
    side: int = 32
    seed: int = 7


@dataclass
class RunConfig:
    mode: str = "baseline"
    seed: int = 0
    out: str = "runs/default"
    s1: float = 0.5
    growth: str = "mogrow"
    momentum: float = 0.998
    model: ModelConfig = field(default_factory=ModelConfig)
    plan: StagePlan = field(default_factory=lambda: StagePlan(28, 4, 2))
    search: SearchConfig = field(default_factory=SearchConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    reg: RegConfig = field(default_factory=RegConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        GrowthKind.parse(self.growth)
        if not 0.0 < self.s1 <= 1.0:
            raise ValueError(f"s1 must lie in (0, 1], got {self.s1}")

    @property
    def growth_kind(self) -> GrowthKind:
        return GrowthKind.parse(self.growth)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)


SECTIONS = {
    "model": ModelConfig,
    "plan": StagePlan,
    "search": SearchConfig,
    "optim": OptimConfig,
    "reg": RegConfig,
    "data": DataConfig,
}


def _build(cls, values: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    return cls(**values)


def from_dict(raw: dict[str, Any]) -> RunConfig:
    raw = dict(raw)
    if raw.get("mode") == "prog" and "growth" not in raw:
        raise ValueError("mode = 'prog' needs an explicit growth operator (growth = ...)")
    sections = {}
    for name, cls in SECTIONS.items():
        if name in raw:
            value = raw.pop(name)
            if not isinstance(value, dict):
                raise ValueError(f"[{name}] must be a table")
            sections[name] = _build(cls, value, name)
    top = {f.name for f in dataclasses.fields(RunConfig)} - set(SECTIONS)
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ValueError(f"unknown top-level key(s): {', '.join(unknown)}")
    return RunConfig(**raw, **sections)


def load_config(path: str | Path) -> RunConfig:
    with open(path, "rb") as f:
        return from_dict(tomli.load(f))
