"""Weight-nested elastic supernet over a stage's candidate sub-networks.

The supernet stores one ParamStore sized for the largest candidate. Blocks
are either always-active (one per block of the previous stage's network) or
optional (the extra copies a growth operator inserted). A depth-d view
activates the always-active blocks plus the first ``d - base_depth`` optional
blocks, taken from the classifier end, so views are nested by construction.

Grid elasticity is handled on read: the single stored positional encoding has
the largest candidate grid and is interpolated down for smaller grids.
"""
from __future__ import annotations

import random
from collections.abc import Sequence
from dataclasses import dataclass, field

import torch

from .autodiff import ParamStore, Tensor
from .growth import GrowthKind, MomentumState, block_sources, grow, new_block_mask
from .model import (ModelConfig, SubNetSpec, _leaf, build_model, forward,
                    interpolate_pos_encoding, pe_grid, store_spec)

SHARED_PREFIXES = ("stem.", "cls_token", "pos_embed", "head.")


@dataclass(frozen=True)
class ActiveView:
    spec: SubNetSpec
    layers: tuple[int, ...]


@dataclass
class ElasticSupernet:
    cfg: ModelConfig
    params: ParamStore
    base: SubNetSpec
    candidates: list[SubNetSpec]
    always_active: list[bool]
    # optional block indices, classifier end first
    optional_order: list[int] = field(default_factory=list)

    @property
    def largest(self) -> SubNetSpec:
        return SubNetSpec(max(c.depth for c in self.candidates), max(c.grid for c in self.candidates))

    def view_layers(self, depth: int) -> tuple[int, ...]:
        base_layers = [i for i, a in enumerate(self.always_active) if a]
        extra = depth - len(base_layers)
        if not 0 <= extra <= len(self.optional_order):
            raise ValueError(f"depth {depth} outside supernet range "
                             f"[{len(base_layers)}, {len(self.always_active)}]")
        return tuple(sorted(base_layers + self.optional_order[:extra]))

    def names_for(self, spec: SubNetSpec) -> list[str]:
        """Parameter names consumed by the sub-network ``spec``."""
        layers = select(self, spec).layers
        prefixes = tuple(f"blocks.{i}." for i in layers)
        return [k for k in self.params if k.startswith(SHARED_PREFIXES) or k.startswith(prefixes)]


def _layer_roles(kind: GrowthKind, base_depth: int, depth: int) -> tuple[list[bool], list[int]]:
    sources = block_sources(kind, base_depth, depth)
    is_new = new_block_mask(sources)
    always = [not n for n in is_new]
    optional = [j for j in reversed(range(depth)) if is_new[j]]
    return always, optional


def build_supernet(
    cfg: ModelConfig,
    params: ParamStore | None,
    candidates: Sequence[SubNetSpec],
    kind: GrowthKind | str = GrowthKind.MOGROW,
    momentum: MomentumState | None = None,
    seed: int = 0,
) -> ElasticSupernet:
    """Grow ``params`` (the previous stage's network) into a supernet over ``candidates``.

    With ``params=None`` the supernet is randomly initialized at the largest
    candidate and the smallest candidate plays the role of the base network.
    """
    kind = GrowthKind.parse(kind)
    candidates = sorted(set(candidates), key=lambda s: (s.depth, s.grid))
    if not candidates:
        raise ValueError("empty candidate set")
    largest = SubNetSpec(max(c.depth for c in candidates), max(c.grid for c in candidates))
    if params is None:
        base = SubNetSpec(min(c.depth for c in candidates), min(c.grid for c in candidates))
        weights = build_model(cfg, largest, seed)
        # a randomly initialized supernet has no "copies", lay it out as if
        # interpolated from the base depth
        layout_kind = GrowthKind.INTERPOLATION
    else:
        base = store_spec(params)
        if base == largest:
            weights = {k: _leaf(v) for k, v in params.items()}
        else:
            weights = grow(kind, params, cfg, largest, momentum, seed)
        layout_kind = kind
    for c in candidates:
        if not base <= c:
            raise ValueError(f"candidate {c} is smaller than the base network {base}")
    always, optional = _layer_roles(layout_kind, base.depth, largest.depth)
    return ElasticSupernet(cfg, weights, base, candidates, always, optional)


def select(net: ElasticSupernet, spec: SubNetSpec) -> ActiveView:
    if spec not in net.candidates:
        raise ValueError(f"{spec} is not a candidate of this supernet")
    return ActiveView(spec, net.view_layers(spec.depth))


def sample_subnet(net: ElasticSupernet, rng: random.Random) -> SubNetSpec:
    return net.candidates[rng.randrange(len(net.candidates))]


def supernet_forward(net: ElasticSupernet, spec: SubNetSpec, batch: Tensor,
                     drop_prob: float = 0.0, gen: torch.Generator | None = None) -> Tensor:
    view = select(net, spec)
    return forward(net.params, net.cfg, spec, batch, blocks=view.layers, drop_prob=drop_prob, gen=gen)


def export_subnet(net: ElasticSupernet, spec: SubNetSpec,
                  params: ParamStore | None = None) -> tuple[ParamStore, dict[str, str]]:
    """Standalone copy of the sub-network ``spec``, plus the name provenance map.

    ``params`` lets the same view be cut out of a parallel store (the momentum
    copy of the supernet).
    """
    src = net.params if params is None else params
    view = select(net, spec)
    out: ParamStore = {}
    prov: dict[str, str] = {}
    for name in ("stem.weight", "stem.bias", "cls_token", "pos_embed"):
        t = src[name].detach()
        if name == "pos_embed":
            t = interpolate_pos_encoding(t, pe_grid(t), spec.grid)
        out[name] = _leaf(t)
        prov[name] = name
    for j, i in enumerate(view.layers):
        prefix = f"blocks.{i}."
        for name, t in src.items():
            if name.startswith(prefix):
                new = f"blocks.{j}.{name[len(prefix):]}"
                out[new] = _leaf(t.detach())
                prov[new] = name
    for name, t in src.items():
        if name.startswith("head."):
            out[name] = _leaf(t.detach())
            prov[name] = name
    return out, prov
