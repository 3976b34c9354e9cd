"""Checkpoint container.

Layout (little-endian)::

    b"PVCK"            4-byte magic
    u32 version        currently 1
    u64 header_len
    header             UTF-8 JSON: {"config": {...}, "step_count": int,
                                     "tensors": [{"name", "shape", "offset", "nbytes"}, ...],
                                     "meta": {...}}
    blob               concatenated float32 tensor data; offsets are relative to blob start
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .autodiff import ParamStore

MAGIC = b"PVCK"
VERSION = 1
PREFIX = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, params: ParamStore, config: dict, step_count: int = 0,
                    meta: dict | None = None) -> None:
    entries, chunks, offset = [], [], 0
    for name, t in params.items():
        arr = t.detach().cpu().numpy().astype("<f4", copy=False)
        raw = arr.tobytes(order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"config": config, "step_count": step_count, "tensors": entries,
                         "meta": meta or {}}).encode()
    with open(path, "wb") as f:
        f.write(PREFIX.pack(MAGIC, VERSION, len(header)))
        f.write(header)
        for raw in chunks:
            f.write(raw)


def load_checkpoint(path: str | Path) -> tuple[ParamStore, dict, int, dict]:
    """Return (params, config, step_count, meta)."""
    raw = Path(path).read_bytes()
    if len(raw) < PREFIX.size:
        raise CheckpointError(f"{path}: too short for a checkpoint header")
    magic, version, hlen = PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = PREFIX.size + hlen
    header = json.loads(raw[PREFIX.size:start].decode())
    params: ParamStore = {}
    for e in header["tensors"]:
        lo = start + e["offset"]
        if lo + e["nbytes"] > len(raw):
            raise CheckpointError(f"{path}: tensor {e['name']} runs past end of file")
        arr = np.frombuffer(raw, dtype="<f4", count=e["nbytes"] // 4, offset=lo).reshape(e["shape"])
        params[e["name"]] = torch.from_numpy(arr.astype(np.float32)).requires_grad_(True)
    return params, header["config"], header["step_count"], header.get("meta", {})
