"""Dataset containers, loaders, splitting, augmentation and synthetic fixtures.

Samples are stored as one NHWC array so batches are plain fancy-indexing.
8-bit data keeps its uint8 dtype (rescaled by x/255 inside the network);
float data carries its dataset-global (min, max) in ``value_range``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .archmodel import InputShape


class DataFormatError(ValueError):
    """A file does not follow its documented format."""


CIFAR10_CLASSES = (
    "airplane", "automobile", "bird", "cat", "deer",
    "dog", "frog", "horse", "ship", "truck",
)
CIFAR10_RECORD = 1 + 32 * 32 * 3

GWT1_MAGIC = b"GWT1"
GWT1_HEADER = struct.Struct("<4sIIIIBH")
GWT1_DTYPES = {0: np.dtype("u1"), 1: np.dtype("<f4")}


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    num_classes: int
    value_range: tuple = None
    class_names: Optional[tuple] = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 4:
            raise DataFormatError(f"samples must be (N, H, W, C), got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DataFormatError(f"{y.shape[0]} labels for {x.shape[0]} samples")
        if self.num_classes < 1:
            raise DataFormatError("num_classes must be >= 1")
        if len(y) and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataFormatError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.value_range is None:
            if x.dtype == np.uint8:
                vr = (0.0, 255.0)
            elif x.size:
                vr = (float(x.min()), float(x.max()))
            else:
                vr = (0.0, 1.0)
            object.__setattr__(self, "value_range", vr)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def shape(self) -> InputShape:
        _, h, w, c = self.x.shape
        return InputShape(h, w, c)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.num_classes, self.value_range,
                       self.class_names, dict(self.info))

    def equals(self, other: "Dataset") -> bool:
        return (
            self.x.dtype == other.x.dtype
            and self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and self.num_classes == other.num_classes
        )


# -- CIFAR-10 -----------------------------------------------------------------

def load_cifar10_binary(paths: Iterable) -> Dataset:
    """Read CIFAR-10 binary batches (1 label byte + 3072 channel-major pixels)."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    xs, ys = [], []
    for path in paths:
        blob = Path(path).read_bytes()
        if len(blob) % CIFAR10_RECORD:
            raise DataFormatError(
                f"{path}: size {len(blob)} is not a multiple of {CIFAR10_RECORD}"
            )
        rec = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR10_RECORD)
        labels = rec[:, 0]
        if labels.size and labels.max() > 9:
            bad = int(np.argmax(labels > 9))
            raise DataFormatError(f"{path}: record {bad} has label {labels[bad]} > 9")
        xs.append(rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1))
        ys.append(labels.astype(np.int64))
    x = np.concatenate(xs) if xs else np.zeros((0, 32, 32, 3), np.uint8)
    y = np.concatenate(ys) if ys else np.zeros(0, np.int64)
    return Dataset(np.ascontiguousarray(x), y, 10, (0.0, 255.0), CIFAR10_CLASSES)


# -- GWT1 container -----------------------------------------------------------

def dumps_raw_tensor(ds: Dataset) -> bytes:
    if ds.x.dtype == np.uint8:
        code = 0
    elif ds.x.dtype == np.float32:
        code = 1
    else:
        raise DataFormatError(f"GWT1 stores uint8 or float32, not {ds.x.dtype}")
    n, h, w, c = ds.x.shape
    head = GWT1_HEADER.pack(GWT1_MAGIC, n, h, w, c, code, ds.num_classes)
    rec = np.dtype([("label", "<u2"), ("data", GWT1_DTYPES[code], (h * w * c,))])
    body = np.empty(n, dtype=rec)
    body["label"] = ds.y
    body["data"] = ds.x.reshape(n, h * w * c)
    return head + body.tobytes()


def loads_raw_tensor(blob: bytes) -> Dataset:
    if len(blob) < GWT1_HEADER.size:
        raise DataFormatError("truncated GWT1 header")
    magic, n, h, w, c, code, classes = GWT1_HEADER.unpack_from(blob)
    if magic != GWT1_MAGIC:
        raise DataFormatError(f"bad magic {magic!r}")
    if code not in GWT1_DTYPES:
        raise DataFormatError(f"unknown dtype flag {code}")
    if min(h, w, c) < 1:
        raise DataFormatError("GWT1 dimensions must be >= 1")
    rec = np.dtype([("label", "<u2"), ("data", GWT1_DTYPES[code], (h * w * c,))])
    expected = GWT1_HEADER.size + n * rec.itemsize
    if len(blob) != expected:
        raise DataFormatError(f"payload length {len(blob)} != expected {expected}")
    body = np.frombuffer(blob, dtype=rec, offset=GWT1_HEADER.size, count=n)
    x = body["data"].reshape(n, h, w, c).astype(GWT1_DTYPES[code].newbyteorder("="))
    return Dataset(x, body["label"].astype(np.int64), classes)


def write_raw_tensor(path, ds: Dataset) -> None:
    Path(path).write_bytes(dumps_raw_tensor(ds))


def load_raw_tensor(path) -> Dataset:
    return loads_raw_tensor(Path(path).read_bytes())


# -- time series --------------------------------------------------------------

def load_timeseries_csv(path, window: int, reshape: Sequence[int]) -> Dataset:
    """Cut a ``value,label`` CSV into non-overlapping single-label windows.

    Values are min-max scaled with the global range of the file (a constant
    signal maps to zeros). Windows spanning a label change are dropped and
    counted in ``info["dropped_windows"]``.
    """
    h, w = int(reshape[0]), int(reshape[1])
    if h * w != window:
        raise DataFormatError(f"reshape {h}x{w} does not hold a window of {window}")
    values, labels = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and [r.strip().lower() for r in row] == ["value", "label"]:
                continue
            if len(row) != 2:
                raise DataFormatError(f"{path}:{lineno}: expected 'value,label'")
            try:
                v = float(row[0])
                lab = int(row[1])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric cell {row!r}") from None
            if not math.isfinite(v) or lab < 0:
                raise DataFormatError(f"{path}:{lineno}: invalid value {row!r}")
            values.append(v)
            labels.append(lab)
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if values.size:
        lo, hi = values.min(), values.max()
        scaled = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
    else:
        scaled = values
    xs, ys, dropped = [], [], 0
    for start in range(0, len(values) - window + 1, window):
        lab = labels[start:start + window]
        if (lab != lab[0]).any():
            dropped += 1
            continue
        xs.append(scaled[start:start + window].reshape(h, w, 1))
        ys.append(lab[0])
    x = np.asarray(xs, dtype=np.float32).reshape(-1, h, w, 1)
    classes = int(labels.max()) + 1 if labels.size else 1
    return Dataset(x, np.asarray(ys, dtype=np.int64), classes, (0.0, 1.0),
                   info={"dropped_windows": dropped})


# -- splitting and augmentation -----------------------------------------------

def split(ds: Dataset, val_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle; the last ``round(n * val_fraction)`` samples become validation."""
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = len(ds)
    n_val = int(round(n * val_fraction))
    if n_val == 0 or n_val == n:
        raise ValueError(f"a {val_fraction} split of {n} samples leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(perm[:n - n_val]), ds.subset(perm[n - n_val:])


def rotate_image(img: np.ndarray, angle: float, fill=0) -> np.ndarray:
    """Rotate an (H, W, C) image counter-clockwise about its center.

    Nearest-neighbour inverse mapping; pixels mapped from outside the
    source take ``fill``.
    """
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.mgrid[0:h, 0:w]
    dy, dx = rows - cy, cols - cx
    cos, sin = math.cos(angle), math.sin(angle)
    # inverse of a counter-clockwise rotation in (row-down, col-right) coordinates
    src_c = np.rint(cx + cos * dx - sin * dy).astype(int)
    src_r = np.rint(cy + sin * dx + cos * dy).astype(int)
    ok = (src_r >= 0) & (src_r < h) & (src_c >= 0) & (src_c < w)
    out = np.full_like(img, fill)
    out[ok] = img[src_r[ok], src_c[ok]]
    return out


MAX_ROTATION = 2 * math.pi / 5


def augment(batch: np.ndarray, flip: bool = True, rotate: bool = False, rng=None,
            seed: Optional[int] = None, fill=0) -> np.ndarray:
    """Random horizontal flips (p=0.5) and optional rotations in +-2*pi/5."""
    batch = np.asarray(batch)
    if batch.ndim != 4:
        raise ValueError("augment expects an (N, H, W, C) batch")
    if rotate and min(batch.shape[1], batch.shape[2]) < 2:
        raise ValueError("rotation needs 2-D images; got a 1-wide input")
    if rng is None:
        rng = np.random.default_rng(seed)
    out = batch.copy()
    if flip:
        mask = rng.random(len(out)) < 0.5
        out[mask] = out[mask, :, ::-1, :]
    if rotate:
        angles = rng.uniform(-MAX_ROTATION, MAX_ROTATION, size=len(out))
        for i, a in enumerate(angles):
            out[i] = rotate_image(out[i], a, fill)
    return out


# -- synthetic fixtures -------------------------------------------------------

SYNTHETIC = ("separable-blobs", "checker", "surface-carrier")


def make_synthetic(name: str, n: int = 200, shape: InputShape = InputShape(16, 16, 1),
                   seed: int = 0, num_classes: int = 2) -> Dataset:
    """Deterministic fixture datasets.

    separable-blobs: Gaussian texture (sigma 8) around a per-class mean
        intensity; class means are >= 120 / (num_classes - 1) grey levels apart.
    checker: 2x2-cell checkerboard; the class is the phase of the pattern.
    surface-carrier: random labels at 50x50x3, a shape/class carrier for
        surrogate-driven searches where the data itself is never trained on.
    """
    if name not in SYNTHETIC:
        raise ValueError(f"unknown synthetic generator {name!r}; choose from {SYNTHETIC}")
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    rng = np.random.default_rng(seed)
    if name == "surface-carrier":
        shape = InputShape(50, 50, 3) if shape == InputShape(16, 16, 1) else shape
    h, w, c = shape.height, shape.width, shape.channels
    y = np.arange(n) % num_classes
    rng.shuffle(y)
    if name == "separable-blobs":
        step = 120.0 / max(num_classes - 1, 1)
        means = 60.0 + step * y
        x = means[:, None, None, None] + rng.normal(0.0, 8.0, size=(n, h, w, c))
    elif name == "checker":
        rows, cols = np.mgrid[0:h, 0:w]
        base = ((rows // 2 + cols // 2) % 2).astype(np.float64)
        phase = (y % 2)[:, None, None]
        pattern = np.where(phase == 0, base, 1.0 - base)
        x = (60.0 + 120.0 * pattern)[..., None] + rng.normal(0.0, 8.0, size=(n, h, w, c))
    else:
        x = rng.integers(0, 256, size=(n, h, w, c))
    x = np.clip(np.rint(x), 0, 255).astype(np.uint8)
    return Dataset(x, y.astype(np.int64), num_classes, (0.0, 255.0),
                   info={"generator": name, "seed": seed})
