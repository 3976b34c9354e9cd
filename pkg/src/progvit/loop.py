"""Training engine shared by the baseline, progressive and automated runs."""
from __future__ import annotations

import json
import logging
import math
import random
import time
from collections.abc import Mapping
from dataclasses import asdict, dataclass
from pathlib import Path

import torch

from . import autodiff as ad
from .autodiff import AdamW, ParamStore
from .config import RunConfig
from .cost import CostModel
from .data import Dataset, Split, augment, batches, steps_per_epoch
from .growth import (GrowthKind, MomentumState, grow, growth_provenance, momentum_update,
                     rebuild_momentum)
from .model import SubNetSpec, forward, resize_input, store_spec
from .schedule import AdaRegState, spec_ratio
from .supernet import ElasticSupernet, export_subnet, sample_subnet, select

log = logging.getLogger(__name__)


@dataclass
class MetricRecord:
    epoch: int
    stage: int
    phase: str  # "train" or "supernet"
    depth: int
    grid: int
    train_loss: float
    eval_accuracy: float
    step_flops: float
    cumulative_flops: float
    wall_seconds: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def read_metrics(path: str | Path) -> list[MetricRecord]:
    with open(path) as f:
        return [MetricRecord(**json.loads(line)) for line in f if line.strip()]


@torch.no_grad()
def evaluate_params(params: ParamStore, cfg, spec: SubNetSpec, split: Split,
                    batch_size: int = 500, blocks=None) -> float:
    correct = 0
    side = spec.input_side(cfg.patch_size)
    for x, y in batches(split, batch_size):
        logits = forward(params, cfg, spec, resize_input(x, side), blocks=blocks)
        correct += int((logits.argmax(-1) == y).sum())
    return correct / max(1, len(split))


@torch.no_grad()
def mean_loss(params: ParamStore, cfg, spec: SubNetSpec, split: Split,
              batch_size: int = 500, blocks=None) -> float:
    total = 0.0
    side = spec.input_side(cfg.patch_size)
    for x, y in batches(split, batch_size):
        logits = forward(params, cfg, spec, resize_input(x, side), blocks=blocks)
        total += float(ad.cross_entropy(logits, y)) * y.shape[0]
    return total / max(1, len(split))


class Trainer:
    """Owns the online parameters, optimizer, momentum copy and metric stream."""

    def __init__(self, cfg: RunConfig, data: Dataset, metrics_path: str | Path | None = None,
                 track_momentum: bool = True):
        self.cfg = cfg
        self.model_cfg = cfg.model
        self.data = data
        self.cost = CostModel(cfg.model)
        o = cfg.optim
        self.optimizer = AdamW(lr=o.lr, weight_decay=o.weight_decay)
        self.gen = torch.Generator().manual_seed(cfg.seed + 1)
        self.sampler = random.Random(cfg.seed + 2)
        self.steps_per_epoch = steps_per_epoch(len(data.train), o.batch_size)
        self.total_steps = cfg.plan.total_epochs * self.steps_per_epoch
        self.adareg = AdaRegState(
            {"drop_path": cfg.reg.drop_path, "input_noise": cfg.reg.input_noise}, s1=cfg.s1)
        self.params: ParamStore = {}
        self.momentum: MomentumState | None = None
        self.track_momentum = track_momentum
        self.step = 0
        self.epoch = 0
        self.cumulative_flops = 0.0
        self.records: list[MetricRecord] = []
        self.growth_events: list[tuple[int, SubNetSpec, SubNetSpec]] = []
        self.started = time.perf_counter()
        self.metrics_path = Path(metrics_path) if metrics_path else None
        if self.metrics_path:
            self.metrics_path.parent.mkdir(parents=True, exist_ok=True)
            self.metrics_path.write_text("")

    # -- parameter bookkeeping ---------------------------------------------

    def set_params(self, params: ParamStore, provenance: Mapping[str, str | None] | None = None,
                   momentum: ParamStore | None = None) -> None:
        """Install a new online ParamStore; carry optimizer buffers per provenance."""
        if provenance is None:
            self.optimizer.reset()
        else:
            self.optimizer.rebind(provenance, params)
        self.params = params
        if not self.track_momentum:
            return
        if self.momentum is None:
            self.momentum = MomentumState.from_params(params, self.cfg.momentum)
        elif momentum is not None:
            self.momentum.params = {k: v.detach().clone() for k, v in momentum.items()}
        else:
            rebuild_momentum(self.momentum, params)

    def grow_to(self, spec: SubNetSpec, kind: GrowthKind | str, seed: int) -> None:
        """Apply a growth operator to the online network and log the event."""
        old = self.params
        before = store_spec(old)
        new = grow(kind, old, self.model_cfg, spec, self.momentum, seed)
        self.set_params(new, growth_provenance(kind, old, new))
        self.growth_events.append((self.epoch, before, spec))
        log.info("epoch %d: grew %s -> %s (%s)", self.epoch, before, spec, GrowthKind.parse(kind).value)

    def lr_at(self, step: int) -> float:
        o = self.cfg.optim
        warm = o.warmup_epochs * self.steps_per_epoch
        if warm and step < warm:
            return o.lr * (step + 1) / warm
        span = max(1, self.total_steps - warm)
        frac = min(1.0, (step - warm) / span)
        return o.min_lr + 0.5 * (o.lr - o.min_lr) * (1 + math.cos(math.pi * frac))

    def regularization(self, spec: SubNetSpec) -> dict[str, float]:
        if self.cfg.reg.adareg:
            return self.adareg.intensity(spec_ratio(spec, self.model_cfg))
        return self.adareg.intensity(1.0)

    # -- steps and epochs -------------------------------------------------------

    def train_step(self, x, y, spec: SubNetSpec, names: list[str] | None = None,
                   blocks=None) -> float:
        reg = self.regularization(spec)
        if self.cfg.reg.flip or self.cfg.reg.shift:
            x = augment(x, self.gen, self.cfg.reg.flip, self.cfg.reg.shift)
        x = resize_input(x, spec.input_side(self.model_cfg.patch_size))
        if reg["input_noise"] > 0:
            x = x + reg["input_noise"] * torch.randn(x.shape, generator=self.gen)
        logits = forward(self.params, self.model_cfg, spec, x, blocks=blocks,
                         drop_prob=reg["drop_path"], gen=self.gen)
        loss = ad.cross_entropy(logits, y)
        ad.backward(loss)
        active = self.params if names is None else {k: self.params[k] for k in names}
        self.optimizer.step(active, lr=self.lr_at(self.step))
        ad.zero_grad(self.params)
        if self.momentum is not None:
            momentum_update(self.momentum, self.params)
        self.step += 1
        self.cumulative_flops += y.shape[0] * self.cost(spec)
        return float(loss.detach())

    def _finish_epoch(self, stage: int, phase: str, spec: SubNetSpec, losses: list[float],
                      flops_before: float, accuracy: float) -> MetricRecord:
        rec = MetricRecord(
            epoch=self.epoch + 1, stage=stage, phase=phase, depth=spec.depth, grid=spec.grid,
            train_loss=sum(losses) / max(1, len(losses)), eval_accuracy=accuracy,
            step_flops=(self.cumulative_flops - flops_before) / max(1, len(losses)),
            cumulative_flops=self.cumulative_flops,
            wall_seconds=time.perf_counter() - self.started)
        self.records.append(rec)
        if self.metrics_path:
            with open(self.metrics_path, "a") as f:
                f.write(rec.to_json() + "\n")
        log.info("epoch %d stage %d %s %s loss %.4f acc %.4f", rec.epoch, stage, phase, spec,
                 rec.train_loss, accuracy)
        self.epoch += 1
        return rec

    def train_epoch(self, spec: SubNetSpec, stage: int) -> MetricRecord:
        if store_spec(self.params).depth != spec.depth:
            raise ValueError(f"online parameters do not match {spec}")
        flops0 = self.cumulative_flops
        losses = [self.train_step(x, y, spec)
                  for x, y in batches(self.data.train, self.cfg.optim.batch_size, self.gen)]
        acc = evaluate_params(self.params, self.model_cfg, spec, self.data.eval)
        return self._finish_epoch(stage, "train", spec, losses, flops0, acc)

    def supernet_epoch(self, net: ElasticSupernet, stage: int) -> MetricRecord:
        """One epoch over the supernet, one sampled sub-network per step."""
        if self.params is not net.params:
            raise ValueError("install the supernet parameters with set_params first")
        flops0 = self.cumulative_flops
        names_cache = {c: net.names_for(c) for c in net.candidates}
        losses = []
        for x, y in batches(self.data.train, self.cfg.optim.batch_size, self.gen):
            spec = sample_subnet(net, self.sampler)
            layers = select(net, spec).layers
            losses.append(self.train_step(x, y, spec, names=names_cache[spec], blocks=layers))
        largest = net.largest
        acc = evaluate_params(self.params, self.model_cfg, largest, self.data.eval,
                              blocks=select(net, largest).layers)
        return self._finish_epoch(stage, "supernet", largest, losses, flops0, acc)

    def adopt_subnet(self, net: ElasticSupernet, spec: SubNetSpec) -> None:
        """Weight recycling: continue training the chosen sub-network from the supernet."""
        params, prov = export_subnet(net, spec)
        ema = export_subnet(net, spec, self.momentum.params)[0] if self.momentum else None
        self.set_params(params, prov, momentum=ema)
