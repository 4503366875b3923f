"""Datasets: IDX files, pooling, and small synthetic sources."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, FormatError

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


@dataclass
class Dataset:
    samples: np.ndarray  # (count, n)
    name: str = ""
    scale: float = 1.0  # stored value = raw * scale + offset
    offset: float = 0.0
    image_shape: tuple | None = None
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise DimensionError("samples must be a (count, n) array")
        if self.image_shape is not None:
            h, w = self.image_shape
            if h * w != self.samples.shape[1]:
                raise DimensionError("image_shape does not match sample width")
            self.image_shape = (int(h), int(w))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def subset(self, index, name=None) -> "Dataset":
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.samples[index], name or self.name, self.scale, self.offset,
                       self.image_shape, labels, dict(self.meta))


# --- IDX ---------------------------------------------------------------------

def _read_idx_array(path):
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError("file too short for an IDX header", offset=len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (IDX_IMAGES, IDX_LABELS):
        raise FormatError(f"bad IDX magic 0x{magic:08X}", offset=0)
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise FormatError("truncated IDX dimension table", offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    size = int(np.prod(dims)) if dims else 0
    if len(raw) < head + size:
        raise FormatError(f"truncated payload: expected {size} bytes", offset=len(raw))
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=head)
    return magic, data.reshape(dims)


def load_idx(path, labels_path=None) -> Dataset:
    """Read an IDX image file; pixels are flattened and scaled to [0, 1]."""
    magic, arr = _read_idx_array(path)
    if magic != IDX_IMAGES:
        raise FormatError("expected an image file (3 dimensions)", offset=0)
    count, h, w = arr.shape
    samples = arr.reshape(count, h * w).astype(np.float64) / 255.0
    labels = None
    if labels_path is not None:
        lmagic, labels = _read_idx_array(labels_path)
        if lmagic != IDX_LABELS or labels.shape[0] != count:
            raise FormatError("label file does not match the images", offset=0)
        labels = labels.astype(np.int64)
    return Dataset(samples, Path(path).name, 1.0 / 255.0, 0.0, (h, w), labels)


def write_idx(path, array) -> None:
    """Write a uint8 array of 1 (labels) or 3 (images) dimensions as IDX."""
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise ConfigError("IDX payload must be uint8")
    if arr.ndim == 1:
        magic = IDX_LABELS
    elif arr.ndim == 3:
        magic = IDX_IMAGES
    else:
        raise DimensionError("IDX arrays must have 1 or 3 dimensions")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr).tobytes())


def downsample(ds: Dataset, factor: int) -> Dataset:
    """Average-pool images by an integer factor (28x28 -> 7x7 for 4, etc.).

    Trailing rows/columns that do not fill a block are dropped.
    """
    if ds.image_shape is None:
        raise DimensionError("dataset has no image shape")
    h, w = ds.image_shape
    H, W = h // factor, w // factor
    if factor < 1 or H < 1 or W < 1:
        raise ConfigError(f"cannot pool {h}x{w} images by {factor}")
    imgs = ds.samples.reshape(-1, h, w)[:, :H * factor, :W * factor]
    pooled = imgs.reshape(-1, H, factor, W, factor).mean(axis=(2, 4))
    return Dataset(pooled.reshape(-1, H * W), ds.name, ds.scale, ds.offset, (H, W),
                   ds.labels, dict(ds.meta))


# --- synthetic sources -------------------------------------------------------

SYNTH_KINDS = ("uniform_box", "gaussian_mixture", "bars")


def synth_source(kind: str, n: int, count: int, seed: int = 0, **options) -> Dataset:
    """Deterministic synthetic dataset.

    ``uniform_box``: iid Unif(0, 1) coordinates.
    ``gaussian_mixture``: equally weighted components around fixed means
    in [0.2, 0.8]^n, each spread along a random low-rank subspace plus a
    small isotropic noise. The component geometry comes from ``geometry_seed``
    so train and test sets drawn with different seeds share it.
    ``bars``: square images (n must be a perfect square) holding one
    horizontal soft-edged bar near the center.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    if kind == "uniform_box":
        rng = np.random.default_rng(seed)
        return Dataset(rng.random((count, n)), "uniform_box")
    if kind == "gaussian_mixture":
        return _gaussian_mixture(n, count, seed, **options)
    if kind == "bars":
        return _bars(n, count, seed, **options)
    raise ConfigError(f"unknown synthetic source {kind!r}")


def mixture_geometry(n, components=4, rank=2, spread=0.3, geometry_seed=0):
    g = np.random.default_rng(geometry_seed)
    means = g.uniform(0.2, 0.8, (components, n))
    basis = g.standard_normal((components, n, rank))
    basis /= np.linalg.norm(basis, axis=1, keepdims=True)
    return means, basis * spread


def _gaussian_mixture(n, count, seed, components=4, rank=2, spread=0.3, noise=0.0,
                      geometry_seed=0):
    means, factors = mixture_geometry(n, components, rank, spread, geometry_seed)
    rng = np.random.default_rng(seed)
    k = rng.integers(0, components, count)
    u = rng.standard_normal((count, rank))
    x = means[k] + np.einsum("cnr,cr->cn", factors[k], u)
    if noise > 0:
        x = x + noise * rng.standard_normal((count, n))
    meta = {"means": means, "factors": factors, "noise": noise}
    return Dataset(x, "gaussian_mixture", labels=k, meta=meta)


def _bars(n, count, seed, length=(5.0, 11.0), width=(0.9, 1.5), intensity=(0.5, 1.0),
          shift=1.0, edge=1.0):
    side = int(round(np.sqrt(n)))
    if side * side != n:
        raise ConfigError(f"bars needs a square image size, got n={n}")
    rng = np.random.default_rng(seed)
    L = rng.uniform(*length, count)[:, None, None]
    sig = rng.uniform(*width, count)[:, None, None]
    amp = rng.uniform(*intensity, count)[:, None, None]
    dr = rng.uniform(-shift, shift, count)[:, None, None]
    dc = rng.uniform(-shift, shift, count)[:, None, None]
    center = 0.5 * (side - 1)
    rows = np.arange(side, dtype=np.float64)[None, :, None] - center - dr
    cols = np.arange(side, dtype=np.float64)[None, None, :] - center - dc
    across = np.exp(-0.5 * (rows / sig) ** 2)
    # smooth ends: logistic ramps of scale ``edge`` pixels
    along = 1.0 / (1.0 + np.exp((np.abs(cols) - 0.5 * L) / edge))
    img = amp * across * along
    return Dataset(img.reshape(count, n), "bars", image_shape=(side, side))
