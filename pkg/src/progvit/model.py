"""Toy vision transformer executable at any (depth, patch-grid) sub-network.

Parameters live in a flat ``dict[str, Tensor]`` (a ParamStore) with
hierarchical names::

    stem.weight, stem.bias          patch projection, (3*p*p, d) and (d,)
    cls_token                       (1, d)
    pos_embed                       (1 + n*n, d), row 0 is the class slot
    blocks.{i}.norm1.weight ...     one pre-norm transformer block per i
    blocks.{i}.rezero               optional (1,) residual gate
    head.norm.weight, head.fc.weight, ...

Block 0 is the one nearest the input.
"""
from __future__ import annotations

import math
import re
from collections.abc import Sequence
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F

from . import autodiff as ad
from .autodiff import ParamStore, Tensor

BLOCK_RE = re.compile(r"^blocks\.(\d+)\.(.+)$")

BLOCK_TENSORS = (
    "norm1.weight", "norm1.bias",
    "attn.qkv.weight", "attn.qkv.bias",
    "attn.proj.weight", "attn.proj.bias",
    "norm2.weight", "norm2.bias",
    "mlp.fc1.weight", "mlp.fc1.bias",
    "mlp.fc2.weight", "mlp.fc2.bias",
)


@dataclass(frozen=True)
class SubNetSpec:
    depth: int
    grid: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.grid < 1:
            raise ValueError(f"grid must be >= 1, got {self.grid}")

    def input_side(self, patch_size: int) -> int:
        return self.grid * patch_size

    def __le__(self, other: SubNetSpec) -> bool:  # componentwise, not lexicographic
        return self.depth <= other.depth and self.grid <= other.grid

    def __ge__(self, other: SubNetSpec) -> bool:
        return other <= self

    def __str__(self) -> str:
        return f"(l={self.depth}, n={self.grid})"


@dataclass(frozen=True)
class ModelConfig:
    max_depth: int = 8
    max_grid: int = 8
    patch_size: int = 4
    embed_dim: int = 64
    heads: int = 4
    mlp_ratio: float = 2.0
    classes: int = 10

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        for name in ("max_depth", "max_grid", "patch_size", "embed_dim", "heads", "classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def hidden_dim(self) -> int:
        return int(round(self.embed_dim * self.mlp_ratio))

    @property
    def full_spec(self) -> SubNetSpec:
        return SubNetSpec(self.max_depth, self.max_grid)

    def check(self, spec: SubNetSpec) -> None:
        if not (1 <= spec.depth <= self.max_depth and 1 <= spec.grid <= self.max_grid):
            raise ValueError(
                f"spec {spec} outside model bounds depth<={self.max_depth}, grid<={self.max_grid}")

    def to_dict(self) -> dict:
        return asdict(self)


def trunc_normal(shape: Sequence[int], std: float, gen: torch.Generator) -> Tensor:
    # truncated at +-2 std, like timm's trunc_normal_ with default bounds scaled
    t = torch.empty(shape)
    t.normal_(0.0, 1.0, generator=gen)
    while True:
        bad = t.abs() > 2.0
        if not bad.any():
            break
        t[bad] = torch.empty(int(bad.sum())).normal_(0.0, 1.0, generator=gen)
    return t * std


def init_block(cfg: ModelConfig, gen: torch.Generator) -> dict[str, Tensor]:
    d, h = cfg.embed_dim, cfg.hidden_dim
    shapes = {
        "attn.qkv.weight": (d, 3 * d),
        "attn.proj.weight": (d, d),
        "mlp.fc1.weight": (d, h),
        "mlp.fc2.weight": (h, d),
    }
    out = {}
    for role in BLOCK_TENSORS:
        if role in shapes:
            out[role] = trunc_normal(shapes[role], 0.02, gen)
        elif role.startswith("norm") and role.endswith("weight"):
            out[role] = torch.ones(d)
        elif role == "mlp.fc1.bias":
            out[role] = torch.zeros(h)
        elif role == "attn.qkv.bias":
            out[role] = torch.zeros(3 * d)
        else:
            out[role] = torch.zeros(d)
    return out


def _leaf(t: Tensor) -> Tensor:
    return t.detach().clone().requires_grad_(True)


def build_model(cfg: ModelConfig, spec: SubNetSpec, seed: int = 0) -> ParamStore:
    cfg.check(spec)
    gen = torch.Generator().manual_seed(seed)
    d, p = cfg.embed_dim, cfg.patch_size
    store: ParamStore = {
        "stem.weight": trunc_normal((3 * p * p, d), 0.02, gen),
        "stem.bias": torch.zeros(d),
        "cls_token": trunc_normal((1, d), 0.02, gen),
        "pos_embed": trunc_normal((1 + spec.grid**2, d), 0.02, gen),
    }
    for i in range(spec.depth):
        for role, t in init_block(cfg, gen).items():
            store[f"blocks.{i}.{role}"] = t
    store["head.norm.weight"] = torch.ones(d)
    store["head.norm.bias"] = torch.zeros(d)
    store["head.fc.weight"] = trunc_normal((d, cfg.classes), 0.02, gen)
    store["head.fc.bias"] = torch.zeros(cfg.classes)
    return {k: _leaf(v) for k, v in store.items()}


def fresh_block(cfg: ModelConfig, seed: int) -> dict[str, Tensor]:
    return init_block(cfg, torch.Generator().manual_seed(seed))


def block_names(store: ParamStore, index: int) -> list[str]:
    prefix = f"blocks.{index}."
    return [k for k in store if k.startswith(prefix)]


def store_depth(store: ParamStore) -> int:
    idx = {int(m.group(1)) for k in store if (m := BLOCK_RE.match(k))}
    if idx != set(range(len(idx))):
        raise ValueError(f"block indices not contiguous: {sorted(idx)}")
    return len(idx)


def store_grid(store: ParamStore) -> int:
    return pe_grid(store["pos_embed"])


def store_spec(store: ParamStore) -> SubNetSpec:
    return SubNetSpec(store_depth(store), store_grid(store))


def pe_grid(pe: Tensor) -> int:
    n = math.isqrt(pe.shape[0] - 1)
    if n * n != pe.shape[0] - 1:
        raise ValueError(f"positional encoding has {pe.shape[0] - 1} grid rows, not a square")
    return n


def param_count(store: ParamStore) -> int:
    return sum(t.numel() for t in store.values())


def spec_param_count(cfg: ModelConfig, spec: SubNetSpec) -> int:
    """|w(psi)|: parameter count of the standalone model at ``spec``."""
    d, h, p = cfg.embed_dim, cfg.hidden_dim, cfg.patch_size
    block = 4 * d + (d * 3 * d + 3 * d) + (d * d + d) + (d * h + h) + (h * d + d)
    shared = 3 * p * p * d + d + d + 2 * d + d * cfg.classes + cfg.classes
    return shared + (1 + spec.grid**2) * d + spec.depth * block


def resize_input(batch: Tensor, target_side: int) -> Tensor:
    """Bilinear resize of (B, C, H, W) to side ``target_side``; align-corners, no antialias."""
    if batch.dim() != 4 or batch.shape[-1] != batch.shape[-2] or batch.shape[-1] < 1:
        raise ValueError(f"resize_input expects square (B, C, H, W) images, got {tuple(batch.shape)}")
    if batch.shape[-1] == target_side:
        return batch
    return F.interpolate(batch, size=(target_side, target_side), mode="bilinear",
                         align_corners=True, antialias=False)


def interpolate_pos_encoding(pe: Tensor, source_grid: int, target_grid: int) -> Tensor:
    """Resample the n_s x n_s grid rows of ``pe`` to n_t x n_t; row 0 (class slot) is copied."""
    if pe.dim() != 2 or pe.shape[0] != 1 + source_grid**2:
        raise ValueError(
            f"positional encoding shape {tuple(pe.shape)} is not (1 + {source_grid}^2, d)")
    if source_grid == target_grid:
        return pe
    d = pe.shape[1]
    grid = pe[1:].reshape(1, source_grid, source_grid, d).permute(0, 3, 1, 2)
    grid = F.interpolate(grid, size=(target_grid, target_grid), mode="bilinear", align_corners=True)
    grid = grid.permute(0, 2, 3, 1).reshape(target_grid * target_grid, d)
    return torch.cat([pe[:1], grid], dim=0)


def patchify(x: Tensor, patch: int) -> Tensor:
    b, c, hgt, wid = x.shape
    n = hgt // patch
    x = x.reshape(b, c, n, patch, n, patch).permute(0, 2, 4, 1, 3, 5)
    return x.reshape(b, n * n, c * patch * patch)


def drop_path(x: Tensor, prob: float, gen: torch.Generator | None) -> Tensor:
    if prob <= 0.0:
        return x
    keep = 1.0 - prob
    mask = torch.empty(x.shape[0], 1, 1).bernoulli_(keep, generator=gen)
    return x * mask / keep


def attention(params: ParamStore, pre: str, x: Tensor, heads: int) -> Tensor:
    b, n, d = x.shape
    dh = d // heads
    qkv = ad.linear(x, params[pre + "attn.qkv.weight"], params[pre + "attn.qkv.bias"])
    q, k, v = qkv.reshape(b, n, 3, heads, dh).permute(2, 0, 3, 1, 4)
    scores = ad.matmul(q, k.transpose(-2, -1)) * (dh**-0.5)
    out = ad.matmul(ad.softmax(scores, dim=-1), v)
    out = out.transpose(1, 2).reshape(b, n, d)
    return ad.linear(out, params[pre + "attn.proj.weight"], params[pre + "attn.proj.bias"])


def mlp(params: ParamStore, pre: str, x: Tensor) -> Tensor:
    h = ad.gelu(ad.linear(x, params[pre + "mlp.fc1.weight"], params[pre + "mlp.fc1.bias"]))
    return ad.linear(h, params[pre + "mlp.fc2.weight"], params[pre + "mlp.fc2.bias"])


def block_forward(params: ParamStore, index: int, x: Tensor, heads: int,
                  drop_prob: float = 0.0, gen: torch.Generator | None = None) -> Tensor:
    pre = f"blocks.{index}."
    gate = params.get(pre + "rezero")
    y = attention(params, pre, ad.layer_norm(x, params[pre + "norm1.weight"], params[pre + "norm1.bias"]), heads)
    if gate is not None:
        y = y * gate
    x = x + drop_path(y, drop_prob, gen)
    y = mlp(params, pre, ad.layer_norm(x, params[pre + "norm2.weight"], params[pre + "norm2.bias"]))
    if gate is not None:
        y = y * gate
    return x + drop_path(y, drop_prob, gen)


def forward(
    params: ParamStore,
    cfg: ModelConfig,
    spec: SubNetSpec,
    batch: Tensor,
    blocks: Sequence[int] | None = None,
    drop_prob: float = 0.0,
    gen: torch.Generator | None = None,
) -> Tensor:
    """Logits (B, classes) for ``batch`` of side spec.grid * patch.

    ``blocks`` selects which stored blocks run, in order (default: 0..depth-1);
    the stored positional encoding is interpolated on read when its grid
    differs from ``spec.grid``.
    """
    p = cfg.patch_size
    side = spec.input_side(p)
    if batch.dim() != 4 or batch.shape[-1] != side or batch.shape[-2] != side:
        raise ValueError(f"forward: batch spatial size {tuple(batch.shape[-2:])} != {side} for spec {spec}")
    if blocks is None:
        blocks = range(spec.depth)
    elif len(blocks) != spec.depth:
        raise ValueError(f"forward: {len(blocks)} active blocks for depth {spec.depth}")

    tokens = ad.linear(patchify(batch, p), params["stem.weight"], params["stem.bias"])
    cls = params["cls_token"].expand(tokens.shape[0], 1, -1)
    x = torch.cat([cls, tokens], dim=1)
    pe = params["pos_embed"]
    pe = interpolate_pos_encoding(pe, pe_grid(pe), spec.grid)
    x = x + pe

    for i in blocks:
        x = block_forward(params, i, x, cfg.heads, drop_prob, gen)

    x = ad.layer_norm(x[:, 0], params["head.norm.weight"], params["head.norm.bias"])
    return ad.linear(x, params["head.fc.weight"], params["head.fc.bias"])


def clone_store(store: ParamStore) -> ParamStore:
    return {k: _leaf(v) for k, v in store.items()}


def detached(store: ParamStore) -> ParamStore:
    return {k: v.detach().clone() for k, v in store.items()}
