"""Dataset ingestion: a synthetic generator and a raw uint8 record format.

Record file layout (little-endian)::

    header  : magic b"PVDS" | u8 version (=1) | u8 channels (=3) | u16 height | u16 width | u32 count
    records : count x ( u8 label | height*width*3 u8 pixels, HWC order )

A dataset directory holds ``train.bin``, ``eval.bin`` and ``labels.txt`` (one
class name per line; the line number is the label byte).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .autodiff import Tensor

MAGIC = b"PVDS"
VERSION = 1
HEADER = struct.Struct("<4sBBHHI")

# images are mapped from [0, 255] to roughly zero mean, unit scale
PIXEL_MEAN = 127.5
PIXEL_SCALE = 64.0


class DatasetFormatError(ValueError):
    pass


@dataclass
class Split:
    images: Tensor  # (N, 3, H, W) float32, normalized
    labels: Tensor  # (N,) int64

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def side(self) -> int:
        return self.images.shape[-1]

    def subset(self, n: int, seed: int) -> Split:
        gen = torch.Generator().manual_seed(seed)
        idx = torch.randperm(len(self), generator=gen)[:n]
        return Split(self.images[idx], self.labels[idx])


@dataclass
class Dataset:
    train: Split
    eval: Split
    classes: int


def normalize(pixels: np.ndarray) -> Tensor:
    """uint8 (N, H, W, 3) -> float32 (N, 3, H, W)."""
    x = torch.from_numpy(np.ascontiguousarray(pixels)).permute(0, 3, 1, 2).float()
    return ((x - PIXEL_MEAN) / PIXEL_SCALE).contiguous()


# -- synthetic -------------------------------------------------------------

def _smooth_field(rng: np.random.Generator, side: int, cutoff: int) -> np.ndarray:
    """Random band-limited (side, side, 3) field in roughly [-1, 1]."""
    spec = np.zeros((3, side, side), dtype=np.complex128)
    k = cutoff
    spec[:, :k, :k] = rng.normal(size=(3, k, k)) + 1j * rng.normal(size=(3, k, k))
    spec[:, -k + 1:, :k] = rng.normal(size=(3, k - 1, k)) + 1j * rng.normal(size=(3, k - 1, k))
    f = np.fft.ifft2(spec).real
    f /= np.abs(f).max(axis=(1, 2), keepdims=True) + 1e-12
    return f.transpose(1, 2, 0)


def synthetic_pixels(classes: int, count: int, side: int, seed: int,
                     noise: float = 0.35, distractor: float = 0.6,
                     max_shift: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Class templates under random translation, contrast, a distractor and pixel noise.

    Each class owns a smooth random colour pattern. A sample is its class
    pattern circularly shifted, mixed with a weaker shifted pattern of another
    class, plus Gaussian noise. Labels are balanced (count // classes each, the
    remainder spread over the first classes).
    """
    rng = np.random.default_rng(seed)
    templates = np.stack([_smooth_field(rng, side, cutoff=4) for _ in range(classes)])
    if max_shift is None:
        max_shift = side // 4
    labels = np.arange(count) % classes
    rng.shuffle(labels)
    imgs = np.empty((count, side, side, 3), dtype=np.float64)
    for i, c in enumerate(labels):
        dy, dx = rng.integers(-max_shift, max_shift + 1, size=2)
        main = np.roll(templates[c], (dy, dx), axis=(0, 1))
        other = (c + rng.integers(1, classes)) % classes if classes > 1 else c
        dy, dx = rng.integers(-max_shift, max_shift + 1, size=2)
        dist = np.roll(templates[other], (dy, dx), axis=(0, 1))
        contrast = rng.uniform(0.6, 1.0)
        imgs[i] = contrast * main + distractor * rng.uniform(0.5, 1.0) * dist
    imgs += noise * rng.normal(size=imgs.shape)
    pixels = np.clip(imgs * 70.0 + 127.5, 0, 255).astype(np.uint8)
    return pixels, labels.astype(np.uint8)


def synthetic(classes: int = 10, count: int = 5000, side: int = 32, seed: int = 7,
              eval_count: int = 1000, **kwargs) -> Dataset:
    """Train and eval splits drawn from the same class templates."""
    pixels, labels = synthetic_pixels(classes, count + eval_count, side, seed, **kwargs)
    train = Split(normalize(pixels[:count]), torch.from_numpy(labels[:count].astype(np.int64)))
    ev = Split(normalize(pixels[count:]), torch.from_numpy(labels[count:].astype(np.int64)))
    return Dataset(train, ev, classes)


# -- record files ----------------------------------------------------------

def write_records(path: str | Path, pixels: np.ndarray, labels: np.ndarray) -> None:
    n, h, w, c = pixels.shape
    if c != 3:
        raise ValueError("expected (N, H, W, 3) uint8 pixels")
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, 3, h, w, n))
        for i in range(n):
            f.write(bytes([int(labels[i])]))
            f.write(pixels[i].astype(np.uint8).tobytes())


def read_records(path: str | Path, classes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise DatasetFormatError(f"{path}: header truncated at byte offset {len(raw)}")
    magic, version, channels, h, w, n = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r} at byte offset 0")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version} at byte offset 4")
    if channels != 3:
        raise DatasetFormatError(f"{path}: expected 3 channels, header says {channels} (byte offset 5)")
    rec = 1 + h * w * 3
    body = len(raw) - HEADER.size
    if body < n * rec:
        i = body // rec
        raise DatasetFormatError(
            f"{path}: record {i} truncated at byte offset {HEADER.size + i * rec} "
            f"(header promises {n} records of {rec} bytes)")
    if body > n * rec:
        raise DatasetFormatError(f"{path}: {body - n * rec} trailing bytes at byte offset "
                                 f"{HEADER.size + n * rec}")
    arr = np.frombuffer(raw, dtype=np.uint8, offset=HEADER.size, count=n * rec).reshape(n, rec)
    labels = arr[:, 0].copy()
    if classes is not None and n and labels.max() >= classes:
        i = int(np.argmax(labels >= classes))
        raise DatasetFormatError(f"{path}: record {i} label {labels[i]} >= {classes} classes "
                                 f"(byte offset {HEADER.size + i * rec})")
    return arr[:, 1:].reshape(n, h, w, 3).copy(), labels


def load_directory(root: str | Path) -> Dataset:
    root = Path(root)
    names = [ln.strip() for ln in (root / "labels.txt").read_text().splitlines() if ln.strip()]
    classes = len(names)
    splits = {}
    for split in ("train", "eval"):
        px, lb = read_records(root / f"{split}.bin", classes)
        splits[split] = Split(normalize(px), torch.from_numpy(lb.astype(np.int64)))
    return Dataset(splits["train"], splits["eval"], classes)


def export_directory(root: str | Path, classes: int, count: int, side: int, seed: int,
                     eval_count: int = 1000) -> None:
    """Write a synthetic dataset in the record format (handy for CLI demos)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    pixels, labels = synthetic_pixels(classes, count + eval_count, side, seed)
    write_records(root / "train.bin", pixels[:count], labels[:count])
    write_records(root / "eval.bin", pixels[count:], labels[count:])
    (root / "labels.txt").write_text("".join(f"class_{c}\n" for c in range(classes)))


def ingest_dataset(source: str, classes: int = 10, count: int = 5000, side: int = 32,
                   seed: int = 7, eval_count: int = 1000) -> Dataset:
    if source == "synthetic":
        return synthetic(classes, count, side, seed, eval_count)
    return load_directory(source)


# -- batching --------------------------------------------------------------

def batches(split: Split, batch_size: int, gen: torch.Generator | None = None):
    """Yield (images, labels); shuffled when a generator is given."""
    n = len(split)
    order = torch.randperm(n, generator=gen) if gen is not None else torch.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield split.images[idx], split.labels[idx]


def steps_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def augment(images: Tensor, gen: torch.Generator, flip: bool = True, max_shift: int = 2) -> Tensor:
    """Optional random horizontal flip per image and one random circular shift per batch."""
    out = images
    if flip:
        mask = torch.rand(images.shape[0], generator=gen) < 0.5
        out = torch.where(mask[:, None, None, None], images.flip(-1), images)
    if max_shift:
        dy, dx = torch.randint(-max_shift, max_shift + 1, (2,), generator=gen).tolist()
        out = torch.roll(out, shifts=(dy, dx), dims=(-2, -1))
    return out
