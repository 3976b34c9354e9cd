"""Stage planning: growth space, per-stage candidate sets, schedules, AdaReg."""
from __future__ import annotations

import itertools
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelConfig, SubNetSpec, spec_param_count


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class StagePlan:
    total_epochs: int
    stages: int = 4
    supernet_epochs: int = 2

    def __post_init__(self):
        if self.stages < 1 or self.total_epochs < 0 or self.supernet_epochs < 0:
            raise ValueError(f"invalid stage plan {self}")
        if self.total_epochs % self.stages:
            raise ValueError(f"{self.stages} stages do not divide {self.total_epochs} epochs")
        if self.total_epochs and self.epochs_per_stage < self.supernet_epochs + 1:
            raise ValueError(f"{self.epochs_per_stage} epochs per stage leave no room after "
                             f"{self.supernet_epochs} supernet epochs")

    @property
    def epochs_per_stage(self) -> int:
        return self.total_epochs // self.stages

    def stage_of(self, epoch: int) -> int:
        """1-based stage index of 0-based ``epoch``."""
        return epoch // self.epochs_per_stage + 1


@dataclass(frozen=True)
class GrowthSpace:
    ratios: tuple[float, ...]
    depths: tuple[int, ...]
    grids: tuple[int, ...]
    max_depth: int
    max_grid: int

    @property
    def s1(self) -> float:
        return self.ratios[0]

    def spec_at(self, ratio: float) -> SubNetSpec:
        return SubNetSpec(max(1, round_half_up(ratio * self.max_depth)),
                          max(1, round_half_up(ratio * self.max_grid)))

    def contains(self, spec: SubNetSpec) -> bool:
        return spec.depth in self.depths and spec.grid in self.grids

    @property
    def full(self) -> SubNetSpec:
        return SubNetSpec(self.max_depth, self.max_grid)


def build_growth_space(cfg: ModelConfig, s1: float, stages: int = 4) -> GrowthSpace:
    if not 0.0 < s1 <= 1.0:
        raise ValueError(f"initial ratio must lie in (0, 1], got {s1}")
    if stages < 1:
        raise ValueError("need at least one stage")
    if s1 == 1.0 or stages == 1:
        ratios: tuple[float, ...] = (1.0,)
    else:
        step = (1.0 - s1) / (stages - 1)
        ratios = tuple(s1 + k * step for k in range(stages - 1)) + (1.0,)
    depths = sorted({max(1, round_half_up(s * cfg.max_depth)) for s in ratios})
    grids = sorted({max(1, round_half_up(s * cfg.max_grid)) for s in ratios})
    return GrowthSpace(ratios, tuple(depths), tuple(grids), cfg.max_depth, cfg.max_grid)


@dataclass(frozen=True)
class GrowthSchedule:
    specs: tuple[SubNetSpec, ...]

    def __post_init__(self):
        if not self.specs:
            raise ValueError("empty schedule")
        for a, b in zip(self.specs, self.specs[1:]):
            if not a <= b:
                raise ValueError(f"schedule shrinks from {a} to {b}")

    def __len__(self) -> int:
        return len(self.specs)

    def __getitem__(self, k: int) -> SubNetSpec:
        return self.specs[k]

    def check_complete(self, cfg: ModelConfig) -> None:
        if self.specs[-1] != cfg.full_spec:
            raise ValueError(f"schedule ends at {self.specs[-1]}, not the full model {cfg.full_spec}")

    @property
    def growth_events(self) -> int:
        return sum(a != b for a, b in zip(self.specs, self.specs[1:]))

    def to_records(self) -> list[dict]:
        return [{"stage": k + 1, "depth": s.depth, "grid": s.grid} for k, s in enumerate(self.specs)]

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> GrowthSchedule:
        rows = sorted(records, key=lambda r: r["stage"])
        if [r["stage"] for r in rows] != list(range(1, len(rows) + 1)):
            raise ValueError("schedule records must cover stages 1..K exactly once")
        return cls(tuple(SubNetSpec(int(r["depth"]), int(r["grid"])) for r in rows))

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            for rec in self.to_records():
                f.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> GrowthSchedule:
        with open(path) as f:
            return cls.from_records(json.loads(line) for line in f if line.strip())

    def to_ratios(self, cfg: ModelConfig, digits: int = 2) -> tuple[tuple[float, ...], tuple[float, ...]]:
        depth = tuple(round(s.depth / cfg.max_depth, digits) for s in self.specs)
        grid = tuple(round(s.grid / cfg.max_grid, digits) for s in self.specs)
        return depth, grid

    @classmethod
    def from_ratios(cls, cfg: ModelConfig, depth_ratios: Sequence[float],
                    grid_ratios: Sequence[float]) -> GrowthSchedule:
        if len(depth_ratios) != len(grid_ratios):
            raise ValueError("depth and grid ratio sequences differ in length")
        return cls(tuple(
            SubNetSpec(max(1, round_half_up(a * cfg.max_depth)), max(1, round_half_up(b * cfg.max_grid)))
            for a, b in zip(depth_ratios, grid_ratios)))


def uniform_linear_schedule(space: GrowthSpace, stages: int | None = None) -> GrowthSchedule:
    """Both depth and grid scale by a common ratio rising linearly to 1."""
    stages = len(space.ratios) if stages is None else stages
    if len(space.ratios) == 1:
        return GrowthSchedule((space.full,) * stages)
    if stages != len(space.ratios):
        raise ValueError(f"growth space has {len(space.ratios)} rungs, asked for {stages} stages")
    return GrowthSchedule(tuple(space.spec_at(s) for s in space.ratios))


def _pick_small_medium_large(values: Sequence[int]) -> list[int]:
    return sorted({values[0], values[len(values) // 2], values[-1]})


def build_stage_space(space: GrowthSpace, cfg: ModelConfig, k: int,
                      previous: SubNetSpec | None = None) -> list[SubNetSpec]:
    """Candidate sub-networks for stage ``k`` (1-based), at most 9 of them.

    Stage 1 crosses the smallest/medium/largest depth with the same picks of
    grid. Later stages take the previous choice plus the next three depths
    and the next grid, keeping only candidates at least as large (in
    parameter count) as the previous choice.
    """
    if k == 1:
        depths = _pick_small_medium_large(space.depths)
        grids = _pick_small_medium_large(space.grids)
        return [SubNetSpec(d, n) for d, n in itertools.product(depths, grids)]
    if previous is None:
        raise ValueError(f"stage {k} needs the previous stage's choice")
    if not space.contains(previous):
        raise ValueError(f"{previous} is not in the growth space")
    di = space.depths.index(previous.depth)
    gi = space.grids.index(previous.grid)
    depths = space.depths[di:di + 4]
    grids = space.grids[gi:gi + 2]
    floor = spec_param_count(cfg, previous)
    out = [SubNetSpec(d, n) for d, n in itertools.product(depths, grids)
           if spec_param_count(cfg, SubNetSpec(d, n)) >= floor]
    return out


def spec_ratio(spec: SubNetSpec, cfg: ModelConfig) -> float:
    """Scalar capacity ratio of a sub-network: mean of its depth and grid ratios."""
    return 0.5 * (spec.depth / cfg.max_depth + spec.grid / cfg.max_grid)


@dataclass
class AdaRegState:
    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)
    s1: float = 0.5

    def intensity(self, s: float) -> dict[str, float]:
        return adareg_intensity(self, s)


def adareg_intensity(state: AdaRegState, s: float) -> dict[str, float]:
    """Per-regularizer intensity, linear in s from each minimum (s = s1) to maximum (s = 1)."""
    if state.s1 >= 1.0:
        frac = 1.0
    else:
        frac = min(1.0, max(0.0, (s - state.s1) / (1.0 - state.s1)))
    return {name: lo + (hi - lo) * frac for name, (lo, hi) in state.ranges.items()}
