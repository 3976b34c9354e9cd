"""Per-stage growth decision: score candidates by loss * cost**alpha."""
from __future__ import annotations

import json
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import torch

from .config import SearchConfig
from .data import Split, augment
from .growth import GrowthKind, growth_provenance
from .loop import Trainer, mean_loss
from .model import SubNetSpec, build_model
from .schedule import GrowthSchedule, GrowthSpace, build_stage_space
from .supernet import ElasticSupernet, build_supernet, select

log = logging.getLogger(__name__)

# scores closer than this (relative) count as tied; ties go to the cheaper spec
TIE_RTOL = 1e-9


@dataclass
class CandidateScore:
    spec: SubNetSpec
    loss: float
    cost: float
    alpha: float
    score: float
    chosen: bool = False

    def to_record(self, stage: int | None = None) -> dict:
        rec = {"depth": self.spec.depth, "grid": self.spec.grid, "loss": self.loss,
               "cost": self.cost, "alpha": self.alpha, "score": self.score, "chosen": self.chosen}
        return rec if stage is None else {"stage": stage, **rec}


def compute_alpha(pairs: Sequence[tuple[float, float]]) -> float:
    """Exponent that makes the spread of cost**alpha match the spread of loss.

    alpha = ln(L_max / L_min) / ln(T_max / T_min); 0 when either range is flat.
    """
    if len(pairs) < 2:
        return 0.0
    for loss, cost in pairs:
        if not (loss > 0 and cost > 0):
            raise ValueError(f"losses and costs must be positive, got L={loss}, T={cost}")
    losses = [p[0] for p in pairs]
    costs = [p[1] for p in pairs]
    l_range = math.log(max(losses) / min(losses))
    t_range = math.log(max(costs) / min(costs))
    if l_range == 0.0 or t_range == 0.0:
        return 0.0
    return l_range / t_range


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def score_candidates(specs: Sequence[SubNetSpec], losses: Sequence[float], costs: Sequence[float],
                     alpha: str | float = "balanced") -> list[CandidateScore]:
    pairs = list(zip(losses, costs))
    if any(not (l > 0 and t > 0) for l, t in pairs):
        raise ValueError(f"losses and costs must be positive, got {pairs}")
    a = compute_alpha(pairs) if alpha == "balanced" else float(alpha)
    # rank in log space: t**a overflows when a near-flat cost range meets a wide loss range
    logs = [math.log(l) + a * math.log(t) for l, t in zip(losses, costs)]
    out = [CandidateScore(s, l, t, a, _exp(g)) for s, l, t, g in zip(specs, losses, costs, logs)]
    best = min(logs)
    tied = [c for c, g in zip(out, logs) if g <= best + math.log1p(TIE_RTOL)]
    winner = min(tied, key=lambda c: (c.cost, c.spec.depth, c.spec.grid))
    winner.chosen = True
    return out


def search_stage(candidates: Sequence[SubNetSpec], loss_of: Callable[[SubNetSpec], float],
                 cost_of: Callable[[SubNetSpec], float],
                 alpha: str | float = "balanced") -> tuple[SubNetSpec, list[CandidateScore]]:
    """Traverse every candidate, score it, return the argmin and the full report."""
    if not candidates:
        raise ValueError("empty candidate set")
    candidates = list(candidates)
    if len(candidates) == 1:
        only = candidates[0]
        return only, [CandidateScore(only, float("nan"), cost_of(only), 0.0, float("nan"), True)]
    losses = [loss_of(c) for c in candidates]
    costs = [cost_of(c) for c in candidates]
    scores = score_candidates(candidates, losses, costs, alpha)
    chosen = next(c.spec for c in scores if c.chosen)
    return chosen, scores


def fixed_eval_subset(train: Split, cfg: SearchConfig, shift: int = 2, flip: bool = False) -> Split:
    """A training subset with one frozen draw of the training augmentation."""
    sub = train.subset(min(cfg.eval_subset_size, len(train)), cfg.eval_seed)
    gen = torch.Generator().manual_seed(cfg.eval_seed)
    images = augment(sub.images, gen, flip, shift) if (flip or shift) else sub.images
    return Split(images, sub.labels)


def supernet_loss(net: ElasticSupernet, subset: Split) -> Callable[[SubNetSpec], float]:
    """Training loss of a candidate at its own grid, regularizers off."""
    def loss_of(spec: SubNetSpec) -> float:
        return mean_loss(net.params, net.cfg, spec, subset, blocks=select(net, spec).layers)
    return loss_of


def run_autoprog(trainer: Trainer, space: GrowthSpace, kind: GrowthKind | str = GrowthKind.MOGROW,
                 report_path: str | Path | None = None) -> GrowthSchedule:
    """Stage loop: grow into a supernet, train it, search, recycle weights, train the choice."""
    cfg = trainer.cfg
    mcfg = cfg.model
    plan = cfg.plan
    kind = GrowthKind.parse(kind)
    tau = plan.epochs_per_stage
    if report_path:
        Path(report_path).write_text("")
    if plan.total_epochs == 0:
        trainer.set_params(build_model(mcfg, mcfg.full_spec, cfg.seed))
        return GrowthSchedule((mcfg.full_spec,) * plan.stages)

    subset = fixed_eval_subset(trainer.data.train, cfg.search, cfg.reg.shift, cfg.reg.flip)
    chosen: list[SubNetSpec] = []
    prev: SubNetSpec | None = None
    for k in range(1, plan.stages + 1):
        if k == plan.stages:
            candidates = [mcfg.full_spec]
        else:
            candidates = build_stage_space(space, mcfg, k, prev)
        seed = cfg.seed * 1000 + k
        epochs = tau
        if len(candidates) == 1:
            spec = candidates[0]
            if prev is None:
                trainer.set_params(build_model(mcfg, spec, cfg.seed))
            elif spec != prev:
                trainer.grow_to(spec, kind, seed)
        else:
            old = trainer.params if prev is not None else None
            net = build_supernet(mcfg, old, candidates, kind, trainer.momentum, seed if old else cfg.seed)
            prov = growth_provenance(kind, old, net.params) if old and net.base != net.largest else None
            trainer.set_params(net.params, prov)
            if prev is not None and net.base != net.largest:
                trainer.growth_events.append((trainer.epoch, prev, net.largest))
            for _ in range(plan.supernet_epochs):
                trainer.supernet_epoch(net, k)
            spec, scores = search_stage(candidates, supernet_loss(net, subset), trainer.cost,
                                        cfg.search.alpha)
            log.info("stage %d chose %s among %d candidates", k, spec, len(candidates))
            if report_path:
                with open(report_path, "a") as f:
                    for c in scores:
                        f.write(json.dumps(c.to_record(k)) + "\n")
            trainer.adopt_subnet(net, spec)
            epochs = tau - plan.supernet_epochs
        for _ in range(epochs):
            trainer.train_epoch(spec, k)
        chosen.append(spec)
        prev = spec
    return GrowthSchedule(tuple(chosen))
