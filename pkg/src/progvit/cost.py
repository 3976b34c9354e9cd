"""Analytic per-image training cost of a sub-network.

FLOPs are counted as multiply-accumulates of the matmuls (the convention
behind the usual "4.6G for DeiT-S" figure); normalization, softmax and
activations are ignored.
"""
from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from .model import ModelConfig, SubNetSpec

BACKWARD_FACTOR = 3  # forward + backward ~ 3x forward


def block_flops(tokens: int, dim: int, hidden: int) -> int:
    qkv = 3 * tokens * dim * dim
    scores = tokens * tokens * dim
    mix = tokens * tokens * dim
    proj = tokens * dim * dim
    ffn = 2 * tokens * dim * hidden
    return qkv + scores + mix + proj + ffn


def forward_flops(cfg: ModelConfig, spec: SubNetSpec) -> int:
    patches = spec.grid * spec.grid
    tokens = patches + 1
    stem = patches * 3 * cfg.patch_size**2 * cfg.embed_dim
    head = cfg.embed_dim * cfg.classes
    return stem + spec.depth * block_flops(tokens, cfg.embed_dim, cfg.hidden_dim) + head


def estimate_cost(cfg: ModelConfig, spec: SubNetSpec) -> float:
    """Training cost T(spec): forward + backward FLOPs per image."""
    return float(BACKWARD_FACTOR * forward_flops(cfg, spec))


@dataclass
class CostModel:
    cfg: ModelConfig
    # optional measured/analytic ratio per spec, e.g. from a wall-clock benchmark
    calibration: dict[SubNetSpec, float] = field(default_factory=dict)

    def __call__(self, spec: SubNetSpec) -> float:
        return estimate_cost(self.cfg, spec) * self.calibration.get(spec, 1.0)

    def calibrate(self, seconds: Mapping[SubNetSpec, float]) -> None:
        """Set per-spec factors so that T tracks measured seconds, normalized at the largest spec."""
        if not seconds:
            return
        ref = max(seconds, key=lambda s: (s.depth, s.grid))
        scale = estimate_cost(self.cfg, ref) / seconds[ref]
        self.calibration = {s: t * scale / estimate_cost(self.cfg, s) for s, t in seconds.items()}


def average_cost_ratio(cfg: ModelConfig, specs: Iterable[SubNetSpec]) -> float:
    """Mean of T(spec) / T(full) over equally long stages."""
    specs = list(specs)
    full = estimate_cost(cfg, cfg.full_spec)
    return sum(estimate_cost(cfg, s) for s in specs) / (len(specs) * full)
