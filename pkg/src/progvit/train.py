"""Run entry points: baseline, manual progressive, automated progressive."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .autodiff import ParamStore
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, from_dict
from .data import Dataset, ingest_dataset
from .growth import GrowthKind
from .loop import MetricRecord, Trainer, evaluate_params
from .model import SubNetSpec, build_model, store_depth
from .schedule import GrowthSchedule, build_growth_space, uniform_linear_schedule
from .search import run_autoprog

log = logging.getLogger(__name__)

METRICS = "metrics.jsonl"
CHECKPOINT = "checkpoint.pvck"
SCHEDULE = "schedule.jsonl"
SEARCH = "search.jsonl"


@dataclass
class RunResult:
    params: ParamStore
    records: list[MetricRecord]
    schedule: GrowthSchedule
    growth_events: list = field(default_factory=list)
    step_count: int = 0
    out: Path | None = None

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].eval_accuracy if self.records else float("nan")

    @property
    def cumulative_flops(self) -> float:
        return self.records[-1].cumulative_flops if self.records else 0.0


def load_data(cfg: RunConfig) -> Dataset:
    d = cfg.data
    return ingest_dataset(d.source, d.classes, d.count, d.side, d.seed, d.eval_count)


def _outdir(cfg: RunConfig, write: bool) -> Path | None:
    if not write:
        return None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(trainer: Trainer, cfg: RunConfig, schedule: GrowthSchedule, out: Path | None) -> RunResult:
    if out:
        spec = SubNetSpec(store_depth(trainer.params), schedule[-1].grid)
        save_checkpoint(out / CHECKPOINT, trainer.params, cfg.to_dict(), trainer.optimizer.step_count,
                        meta={"depth": spec.depth, "grid": spec.grid})
        schedule.save(out / SCHEDULE)
    return RunResult(trainer.params, trainer.records, schedule, trainer.growth_events,
                     trainer.optimizer.step_count, out)


def train_baseline(cfg: RunConfig, data: Dataset | None = None, write: bool = True) -> RunResult:
    torch.set_num_threads(1)
    data = data or load_data(cfg)
    out = _outdir(cfg, write)
    trainer = Trainer(cfg, data, out / METRICS if out else None, track_momentum=False)
    full = cfg.model.full_spec
    trainer.set_params(build_model(cfg.model, full, cfg.seed))
    for e in range(cfg.plan.total_epochs):
        trainer.train_epoch(full, cfg.plan.stage_of(e))
    return _finish(trainer, cfg, GrowthSchedule((full,) * cfg.plan.stages), out)


def train_prog(cfg: RunConfig, data: Dataset | None = None, schedule: GrowthSchedule | None = None,
               write: bool = True) -> RunResult:
    """Progressive training along ``schedule`` (default: uniform linear from s1)."""
    torch.set_num_threads(1)
    data = data or load_data(cfg)
    out = _outdir(cfg, write)
    kind = cfg.growth_kind
    if schedule is None:
        schedule = uniform_linear_schedule(build_growth_space(cfg.model, cfg.s1, cfg.plan.stages),
                                           cfg.plan.stages)
    if len(schedule) != cfg.plan.stages:
        raise ValueError(f"schedule has {len(schedule)} stages, plan has {cfg.plan.stages}")
    schedule.check_complete(cfg.model)
    trainer = Trainer(cfg, data, out / METRICS if out else None,
                      track_momentum=kind is GrowthKind.MOGROW)
    tau = cfg.plan.epochs_per_stage
    trainer.set_params(build_model(cfg.model, schedule[0], cfg.seed))
    for k, spec in enumerate(schedule.specs, start=1):
        if k > 1 and spec != schedule[k - 2]:
            trainer.grow_to(spec, kind, cfg.seed * 1000 + k)
        for _ in range(tau):
            trainer.train_epoch(spec, k)
    return _finish(trainer, cfg, schedule, out)


def train_autoprog(cfg: RunConfig, data: Dataset | None = None, write: bool = True) -> RunResult:
    torch.set_num_threads(1)
    data = data or load_data(cfg)
    out = _outdir(cfg, write)
    trainer = Trainer(cfg, data, out / METRICS if out else None, track_momentum=True)
    space = build_growth_space(cfg.model, cfg.s1, cfg.plan.stages)
    schedule = run_autoprog(trainer, space, cfg.growth_kind, out / SEARCH if out else None)
    return _finish(trainer, cfg, schedule, out)


def run(cfg: RunConfig, schedule: GrowthSchedule | None = None, data: Dataset | None = None,
        write: bool = True) -> RunResult:
    """Dispatch on ``cfg.mode``; a given schedule means retraining without search."""
    if schedule is not None:
        if cfg.mode == "baseline":
            raise ValueError("a growth schedule cannot be used with mode=baseline")
        return train_prog(cfg, data, schedule, write)
    if cfg.mode == "baseline":
        return train_baseline(cfg, data, write)
    if cfg.mode == "prog":
        return train_prog(cfg, data, None, write)
    return train_autoprog(cfg, data, write)


def evaluate(checkpoint: str | Path, split: str = "eval", grid: int | None = None,
             data: Dataset | None = None) -> float:
    """Top-1 accuracy of a checkpoint; larger grids interpolate the positional encoding."""
    params, config, _, meta = load_checkpoint(checkpoint)
    cfg = from_dict(config)
    data = data or load_data(cfg)
    spec = SubNetSpec(store_depth(params), grid or meta.get("grid", cfg.model.max_grid))
    part = data.eval if split == "eval" else data.train
    with torch.no_grad():
        return evaluate_params(params, cfg.model, spec, part)
