"""Growth operators: map a smaller network's ParamStore onto a larger one.

Depth mapping convention: ``depth_map`` indexes layers from the classifier
end (index 0 is the block right below the head). ParamStore block names index
from the input end, so :func:`grow` converts with ``input = depth - 1 - i``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import torch

from .autodiff import ParamStore, Tensor
from .model import (ModelConfig, SubNetSpec, _leaf, fresh_block, interpolate_pos_encoding,
                    store_spec)


class GrowthKind(str, enum.Enum):
    RANDINIT = "randinit"
    STACKING = "stacking"
    INTERPOLATION = "interpolation"
    IDENTITY = "identity"
    MOGROW = "mogrow"

    @classmethod
    def parse(cls, value: str | GrowthKind) -> GrowthKind:
        if isinstance(value, cls):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown growth operator {value!r}; "
                             f"choose from {[k.value for k in cls]}") from None


FRESH = None  # depth_map result for a randomly initialized layer


def depth_map(kind: GrowthKind | str, i: int, l_s: int, l_l: int) -> int | None:
    """Source layer for target layer ``i`` (classifier-end indices), or FRESH."""
    kind = GrowthKind.parse(kind)
    if l_s > l_l:
        raise ValueError(f"cannot shrink depth from {l_s} to {l_l}")
    if l_s < 1:
        raise ValueError(f"source depth must be >= 1, got {l_s}")
    if not 0 <= i < l_l:
        raise IndexError(f"target layer {i} outside [0, {l_l})")
    if kind is GrowthKind.RANDINIT:
        return i if i < l_s else FRESH
    if kind is GrowthKind.STACKING:
        return i % l_s
    # interpolation, and the two operators built on it; floor(i / l_s) in the
    # doubling case, nearest-neighbour spreading for other ratios
    return i * l_s // l_l


def block_sources(kind: GrowthKind | str, l_s: int, l_l: int) -> list[int | None]:
    """Per target block (input-end order), the source block index or FRESH."""
    out = []
    for j in range(l_l):
        src = depth_map(kind, l_l - 1 - j, l_s, l_l)
        out.append(FRESH if src is FRESH else l_s - 1 - src)
    return out


def new_block_mask(sources: list[int | None]) -> list[bool]:
    """True for target blocks that are not the first copy of their source."""
    seen: set[int] = set()
    mask = []
    for src in sources:
        if src is FRESH or src in seen:
            mask.append(True)
        else:
            seen.add(src)
            mask.append(False)
    return mask


@dataclass
class MomentumState:
    params: ParamStore
    m: float = 0.998

    def __post_init__(self):
        if not 0.0 <= self.m <= 1.0:
            raise ValueError(f"momentum must lie in [0, 1], got {self.m}")

    @classmethod
    def from_params(cls, params: ParamStore, m: float = 0.998) -> MomentumState:
        return cls({k: v.detach().clone() for k, v in params.items()}, m)


@torch.no_grad()
def momentum_update(state: MomentumState, online: ParamStore) -> None:
    """ema <- m * ema + (1 - m) * online, for every tensor."""
    if state.params.keys() != online.keys():
        diff = sorted(state.params.keys() ^ online.keys())
        raise ValueError(f"momentum_update: name sets differ, e.g. {diff[:3]}")
    m = state.m
    for name, ema in state.params.items():
        w = online[name]
        if ema.shape != w.shape:
            raise ValueError(f"momentum_update: {name} has shape {tuple(ema.shape)} "
                             f"vs online {tuple(w.shape)}")
        if m == 1.0:
            continue
        if m == 0.0:
            ema.copy_(w)
        else:
            ema.mul_(m).add_(w.detach(), alpha=1.0 - m)


def rebuild_momentum(state: MomentumState, params: ParamStore) -> None:
    state.params = {k: v.detach().clone() for k, v in params.items()}


def grow(
    kind: GrowthKind | str,
    params: ParamStore,
    cfg: ModelConfig,
    target: SubNetSpec,
    momentum: MomentumState | None = None,
    seed: int = 0,
) -> ParamStore:
    """Initialize a ``target``-sized ParamStore from ``params``.

    MoGrow reads the momentum copy instead of ``params`` and otherwise behaves
    exactly like Interpolation. Identity additionally zero-gates each newly
    inserted block so the grown network computes the source network's function.
    """
    kind = GrowthKind.parse(kind)
    source_spec = store_spec(params)
    cfg.check(target)
    if not source_spec <= target:
        raise ValueError(f"cannot grow {source_spec} into smaller spec {target}")
    src = params
    if kind is GrowthKind.MOGROW:
        if momentum is None:
            raise ValueError("MoGrow needs a momentum state")
        src = momentum.params
        if src.keys() != params.keys():
            raise ValueError("momentum copy does not match the online parameter names")

    out: dict[str, Tensor] = {}
    for name, t in src.items():
        if name.startswith("blocks."):
            continue
        if name == "pos_embed":
            t = interpolate_pos_encoding(t.detach(), source_spec.grid, target.grid)
        out[name] = t.detach().clone()

    sources = block_sources(kind, source_spec.depth, target.depth)
    is_new = new_block_mask(sources)
    for j, s in enumerate(sources):
        if s is FRESH:
            for role, t in fresh_block(cfg, seed * 100_003 + j).items():
                out[f"blocks.{j}.{role}"] = t
            continue
        prefix = f"blocks.{s}."
        for name, t in src.items():
            if name.startswith(prefix):
                out[f"blocks.{j}.{name[len(prefix):]}"] = t.detach().clone()
        if kind is GrowthKind.IDENTITY and is_new[j]:
            out[f"blocks.{j}.rezero"] = torch.zeros(1)

    # keep the conventional ordering: stem, cls, pe, blocks..., head
    ordered = {k: out[k] for k in ("stem.weight", "stem.bias", "cls_token", "pos_embed")}
    for j in range(target.depth):
        ordered.update({k: v for k, v in out.items() if k.startswith(f"blocks.{j}.")})
    ordered.update({k: v for k, v in out.items() if k.startswith("head.")})
    return {k: _leaf(v) for k, v in ordered.items()}


def growth_provenance(kind: GrowthKind | str, source: ParamStore, grown: ParamStore) -> dict[str, str | None]:
    """Map each grown tensor name to the source name it was copied from."""
    kind = GrowthKind.parse(kind)
    s_spec, t_spec = store_spec(source), store_spec(grown)
    sources = block_sources(kind, s_spec.depth, t_spec.depth)
    is_new = new_block_mask(sources)
    prov: dict[str, str | None] = {}
    for name in grown:
        if not name.startswith("blocks."):
            prov[name] = name
            continue
        _, j, role = name.split(".", 2)
        s = sources[int(j)]
        if s is FRESH or (role == "rezero" and kind is GrowthKind.IDENTITY and is_new[int(j)]):
            prov[name] = None
        else:
            prov[name] = f"blocks.{s}.{role}"
    return prov
