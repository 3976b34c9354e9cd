"""Differentiable tensor ops and a name-keyed AdamW.

Tensors are plain ``torch.Tensor`` (fp32); torch's autograd records the graph.
The op wrappers below add shape validation with readable errors so that the
model code fails loudly instead of broadcasting silently.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Mapping

import torch
import torch.nn.functional as F

Tensor = torch.Tensor
ParamStore = dict[str, Tensor]

LN_EPS = 1e-6


class ShapeError(ValueError):
    pass


def _fail(op: str, *tensors: Tensor, why: str = "") -> None:
    shapes = ", ".join(str(tuple(t.shape)) for t in tensors)
    msg = f"{op}: incompatible shapes {shapes}"
    if why:
        msg += f" ({why})"
    raise ShapeError(msg)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.dim() < 1 or b.dim() < 1 or a.shape[-1] != (b.shape[-2] if b.dim() > 1 else b.shape[0]):
        _fail("matmul", a, b, why="inner dimensions differ")
    return torch.matmul(a, b)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    # weight is stored (in, out) so that linear == matmul(x, weight) + bias
    if x.shape[-1] != weight.shape[0]:
        _fail("linear", x, weight, why="input features differ from weight rows")
    if bias is not None and bias.shape != weight.shape[1:]:
        _fail("linear", weight, bias, why="bias does not match output features")
    out = torch.matmul(x, weight)
    return out if bias is None else out + bias


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        _fail("add", a, b, why="not broadcastable")
    return a + b


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        _fail("mul", a, b, why="not broadcastable")
    return a * b


def softmax(x: Tensor, dim: int = -1) -> Tensor:
    return torch.softmax(x, dim=dim)


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    d = x.shape[-1]
    if weight.shape != (d,) or bias.shape != (d,):
        _fail("layer_norm", x, weight, bias, why="affine params must be (features,)")
    return F.layer_norm(x, (d,), weight, bias, eps)


def gelu(x: Tensor) -> Tensor:
    return F.gelu(x)


def cross_entropy(logits: Tensor, target: Tensor) -> Tensor:
    if logits.dim() != 2 or target.dim() != 1 or logits.shape[0] != target.shape[0]:
        _fail("cross_entropy", logits, target, why="expected (batch, classes) and (batch,)")
    return F.cross_entropy(logits, target)


OPS: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "linear": linear,
    "add": add,
    "mul": mul,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "gelu": gelu,
    "cross_entropy": cross_entropy,
}


def forward_op(kind: str, *inputs: Tensor, **kwargs) -> Tensor:
    """Dispatch a named op; the graph is recorded when grad mode is on."""
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}; known: {sorted(OPS)}") from None
    return fn(*inputs, **kwargs)


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf reachable from ``loss``.

    Repeated calls accumulate into existing grads, as with torch.
    """
    if loss.numel() != 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {tuple(loss.shape)}")
    if not loss.requires_grad:
        raise RuntimeError("backward: loss has no recorded graph (was grad mode off?)")
    loss.backward()


def zero_grad(params: Mapping[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def default_decay_filter(name: str, p: Tensor) -> bool:
    return p.dim() >= 2 and "pos_embed" not in name and "cls_token" not in name


class AdamW:
    """Decoupled weight decay Adam with per-name moment buffers.

    Buffers are keyed by parameter *name*, so a ParamStore can be rebuilt
    (growth, supernet export) and the optimizer told which names survived
    through :meth:`rebind`.
    """

    def __init__(
        self,
        lr: float = 1e-3,
        weight_decay: float = 0.05,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        decay_filter: Callable[[str, Tensor], bool] = default_decay_filter,
    ):
        if lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {lr}")
        if weight_decay < 0:
            raise ValueError(f"weight decay must be non-negative, got {weight_decay}")
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.decay_filter = decay_filter
        self.state: dict[str, dict] = {}
        self.step_count = 0

    @torch.no_grad()
    def step(self, params: Mapping[str, Tensor], lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        missing = [name for name, p in params.items() if p.grad is None]
        if missing:
            raise RuntimeError(f"optimizer_step: no gradient for parameter {missing[0]!r}"
                               + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
        b1, b2 = self.betas
        for name, p in params.items():
            g = p.grad
            st = self.state.get(name)
            if st is None or st["m"].shape != p.shape:
                st = self.state[name] = {"t": 0, "m": torch.zeros_like(p), "v": torch.zeros_like(p)}
            st["t"] += 1
            t = st["t"]
            st["m"].mul_(b1).add_(g, alpha=1 - b1)
            st["v"].mul_(b2).addcmul_(g, g, value=1 - b2)
            if self.weight_decay and self.decay_filter(name, p):
                p.mul_(1 - lr * self.weight_decay)
            step_size = lr * math.sqrt(1 - b2**t) / (1 - b1**t)
            p.addcdiv_(st["m"], st["v"].sqrt().add_(self.eps), value=-step_size)
        self.step_count += 1

    def rebind(self, provenance: Mapping[str, str | None], params: Mapping[str, Tensor]) -> None:
        """Carry buffers across a ParamStore rebuild.

        ``provenance`` maps each new name to the old name it was copied from
        (or None for fresh tensors). A buffer survives only when the name is
        unchanged and the shape still matches; everything else restarts.
        """
        kept = {}
        for name, p in params.items():
            src = provenance.get(name)
            st = self.state.get(name)
            if src == name and st is not None and st["m"].shape == p.shape:
                kept[name] = st
        self.state = kept

    def reset(self, names: Iterable[str] | None = None) -> None:
        if names is None:
            self.state.clear()
        else:
            for n in names:
                self.state.pop(n, None)

    def state_dict(self) -> dict:
        return {"step_count": self.step_count, "state": self.state}
