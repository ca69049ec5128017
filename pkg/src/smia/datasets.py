"""Data ingestion: IDX-format readers, deterministic synthetic corpora and
splits.

`load_idx` parses the canonical big-endian IDX pair (magic 2051 for image
files, 2049 for label files). Real handwritten-digit files are supplied by
the user (see scripts/fetch_mnist.py); `synth_digits` provides a
deterministic seven-segment stand-in at the same scale, and
`synth_segmentation` generates the ellipse segmentation task.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from . import smoothing

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


@dataclass
class Dataset:
    images: np.ndarray          # (N, C, H, W) float64 in [0, 1]
    labels: np.ndarray          # (N,) or (N, H, W) int64
    kind: str                   # "classification" | "segmentation"
    num_classes: int
    provenance: str

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError("image/label count mismatch")
        if self.images.min() < 0.0 or self.images.max() > 1.0:
            raise ValueError("image values outside [0, 1]")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("label outside class range")

    def __len__(self):
        return self.images.shape[0]

    def subset(self, indices) -> "Dataset":
        return Dataset(self.images[indices], self.labels[indices], self.kind,
                       self.num_classes, f"{self.provenance}[subset]")


def _open(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic, rank):
    with _open(path) as f:
        head = f.read(4 + 4 * rank)
        if len(head) < 4 + 4 * rank:
            raise ValueError(f"{path}: truncated IDX header")
        magic = struct.unpack(">i", head[:4])[0]
        if magic != expected_magic:
            raise ValueError(
                f"{path}: IDX magic {magic}, expected {expected_magic}")
        dims = struct.unpack(f">{rank}i", head[4:])
        count = int(np.prod(dims))
        payload = f.read(count)
        if len(payload) != count:
            raise ValueError(
                f"{path}: truncated IDX payload ({len(payload)} of {count} bytes)")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Load a big-endian IDX image/label pair, scaling pixels to [0, 1]."""
    raw = _read_idx(images_path, IMAGE_MAGIC, rank=3)
    labels = _read_idx(labels_path, LABEL_MAGIC, rank=1).astype(np.int64)
    if raw.shape[0] != labels.shape[0]:
        raise ValueError(
            f"count mismatch: {raw.shape[0]} images vs {labels.shape[0]} labels")
    images = raw.astype(np.float64)[:, None, :, :] / 255.0
    return Dataset(images, labels, "classification", int(labels.max()) + 1,
                   f"idx:{images_path}")


def write_idx(dataset: Dataset, images_path, labels_path):
    """Write a classification dataset as an IDX pair (pixels quantized to
    uint8)."""
    if dataset.kind != "classification":
        raise ValueError("IDX export supports classification datasets only")
    imgs = np.round(dataset.images[:, 0] * 255.0).astype(np.uint8)
    n, h, w = imgs.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, n, h, w))
        f.write(imgs.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


# Seven-segment layout: (row0, col0, row1, col1) spans on an 18x10 glyph box.
_SEGS = {
    "A": (0, 1, 2, 9),
    "B": (1, 8, 9, 10),
    "C": (9, 8, 17, 10),
    "D": (16, 1, 18, 9),
    "E": (9, 0, 17, 2),
    "F": (1, 0, 9, 2),
    "G": (8, 1, 10, 9),
}
_DIGIT_SEGS = ["ABCDEF", "BC", "ABGED", "ABGCD", "FGBC",
               "AFGCD", "AFGECD", "ABC", "ABCDEFG", "ABFGCD"]


def _glyph(digit):
    box = np.zeros((18, 10))
    for seg in _DIGIT_SEGS[digit]:
        r0, c0, r1, c1 = _SEGS[seg]
        box[r0:r1, c0:c1] = 1.0
    return box


def synth_digits(count, seed, noise=0.15, max_shift=4) -> Dataset:
    """Deterministic 28x28 digit classification corpus.

    Seven-segment glyphs with random placement, mild Gaussian blur and
    additive noise. A desk-scale stand-in used when real handwritten-digit
    IDX files are not available.
    """
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    blur = smoothing.make_gaussian_kernel(3, 0.8)
    images = np.zeros((count, 1, 28, 28))
    labels = rng.integers(0, 10, size=count)
    for i in range(count):
        canvas = np.zeros((28, 28))
        dy = rng.integers(-max_shift, max_shift + 1)
        dx = rng.integers(-max_shift, max_shift + 1)
        r0, c0 = 5 + dy, 9 + dx
        canvas[r0:r0 + 18, c0:c0 + 10] = _glyph(labels[i])
        canvas = smoothing.convolve_same(canvas, blur)
        canvas += rng.normal(0.0, noise, size=canvas.shape)
        images[i, 0] = np.clip(canvas, 0.0, 1.0)
    return Dataset(images, labels.astype(np.int64), "classification", 10,
                   f"synth-digits:seed={seed},count={count}")


@dataclass
class SegGeometry:
    image_size: int = 64
    axis_range: tuple[float, float] = (9.0, 16.0)
    intensity_range: tuple[float, float] = (0.75, 0.95)
    background: float = 0.2
    noise: float = 0.05
    foreground_bounds: tuple[float, float] = (0.05, 0.40)


def synth_segmentation(count, seed, geometry: SegGeometry | None = None) -> Dataset:
    """Noisy background with 1-2 bright ellipses; mask = ellipse interiors.

    Samples whose foreground fraction falls outside the configured bounds
    are regenerated, so every emitted mask satisfies them.
    """
    if count < 1:
        raise ValueError("count must be positive")
    geo = geometry or SegGeometry()
    s = geo.image_size
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    images = np.zeros((count, 1, s, s))
    masks = np.zeros((count, s, s), dtype=np.int64)
    for i in range(count):
        while True:
            mask = np.zeros((s, s), dtype=bool)
            canvas = rng.normal(geo.background, geo.noise, size=(s, s))
            for _ in range(rng.integers(1, 3)):
                a = rng.uniform(*geo.axis_range)
                b = rng.uniform(*geo.axis_range)
                cy = rng.uniform(a + 1, s - a - 1)
                cx = rng.uniform(b + 1, s - b - 1)
                theta = rng.uniform(0, np.pi)
                ct, st = np.cos(theta), np.sin(theta)
                u = (yy - cy) * ct + (xx - cx) * st
                v = -(yy - cy) * st + (xx - cx) * ct
                inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
                canvas[inside] = rng.uniform(*geo.intensity_range)
                mask |= inside
            frac = mask.mean()
            if geo.foreground_bounds[0] <= frac <= geo.foreground_bounds[1]:
                break
        images[i, 0] = np.clip(canvas, 0.0, 1.0)
        masks[i] = mask.astype(np.int64)
    return Dataset(images, masks, "segmentation", 2,
                   f"synth-seg:seed={seed},count={count}")


def split_normalize(dataset: Dataset, train_fraction: float, seed: int):
    """Seeded shuffle then split. Loader outputs are already normalized to
    [0, 1]; this is the hook where future loaders would normalize."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(dataset)
    n_train = int(round(n * train_fraction))
    if n_train == 0 or n_train == n:
        raise ValueError("split produces an empty side")
    order = np.random.default_rng(seed).permutation(n)
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])
