"""Robustness to planar rotations of the source images.

Two ways of coping with a rotated source are provided:

* ``train_groupshift_dro``: end-to-end training against the worst rotation
  angle of every batch (inner max by exhaustive search over a grid).
* the structured pipeline: a small network predicts the rotation, the angle
  is quantized and sent with a few bits, the image is derotated and coded by
  a compressor trained on unrotated data, and the decoder rotates back.

Images travel flattened (one row per sample); functions that need the 2-D
layout take the ``shape`` of a single image.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import backward_pass, compress, decompress, forward_pass, reconstruct
from .errors import ConfigError, DimensionError
from .tensor import as_tensor, backward, build_network, forward, network_parameters, \
    set_network_parameters, sgd_step
from .training import DroConfig, TrainResult, samples_of, train_loop

HALF_PI = 0.5 * np.pi


# --- rotation ---------------------------------------------------------------

def _as_images(x, shape):
    x = as_tensor(x)
    if shape is None:
        if x.ndim < 2:
            raise DimensionError("need an image (h, w) or a shape for flat input")
        shape = x.shape[-2:]
        lead = x.shape[:-2]
    else:
        h, w = shape
        if x.shape[-1] != h * w:
            raise DimensionError(f"flat width {x.shape[-1]} does not match image {shape}")
        lead = x.shape[:-1]
    h, w = int(shape[0]), int(shape[1])
    if h < 2 or w < 2:
        raise DimensionError("images must be at least 2x2")
    return x.reshape(-1, h, w), lead, (h, w)


def _plan(phi, count, h, w):
    """Source coordinates and bilinear corner data for every output pixel."""
    phi = np.broadcast_to(as_tensor(phi), (count,)).reshape(count, 1, 1)
    if not np.all(np.isfinite(phi)):
        raise ConfigError("rotation angle must be finite")
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    rc, cc = 0.5 * (h - 1), 0.5 * (w - 1)
    dr, dc = rows - rc, cols - cc
    cos, sin = np.cos(phi), np.sin(phi)
    # output pixel p reads the input at R(-phi) p, so the content turns by +phi
    # (counterclockwise as displayed, rows growing downward)
    s_row = rc + sin * dc + cos * dr
    s_col = cc + cos * dc - sin * dr
    r0 = np.floor(s_row)
    c0 = np.floor(s_col)
    fy = s_row - r0
    fx = s_col - c0
    r0 = r0.astype(np.int64)
    c0 = c0.astype(np.int64)
    drow_dphi = cos * dc - sin * dr
    dcol_dphi = -sin * dc - cos * dr
    return r0, c0, fy, fx, drow_dphi, dcol_dphi


def _corners(r0, c0, h, w):
    out = []
    for di in (0, 1):
        for dj in (0, 1):
            r, c = r0 + di, c0 + dj
            valid = (r >= 0) & (r < h) & (c >= 0) & (c < w)
            out.append((np.clip(r, 0, h - 1), np.clip(c, 0, w - 1), valid))
    return out


def _gather(img, corners):
    b = np.arange(img.shape[0])[:, None, None]
    return [np.where(v, img[b, r, c], 0.0) for r, c, v in corners]


def rotate(x, phi, shape=None) -> np.ndarray:
    """Rotate images about their center by ``phi`` radians.

    Bilinear interpolation; samples falling outside the frame read as 0.
    ``x`` is one image ``(h, w)``, a stack ``(B, h, w)``, or flat rows with
    ``shape=(h, w)``. ``phi`` is a scalar or one angle per image.
    """
    imgs, lead, (h, w) = _as_images(x, shape)
    r0, c0, fy, fx, _, _ = _plan(phi, imgs.shape[0], h, w)
    v00, v01, v10, v11 = _gather(imgs, _corners(r0, c0, h, w))
    out = ((1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11))
    if shape is None:
        return out.reshape(*lead, h, w)
    return out.reshape(*lead, h * w)


def rotate_vjp(x, phi, upstream, shape=None):
    """Vector-Jacobian product of :func:`rotate`.

    Returns ``(grad_x, grad_phi)`` for the scalar ``sum(upstream * rotate(x, phi))``;
    ``grad_phi`` has one entry per image (sum it for a shared scalar angle).
    """
    imgs, lead, (h, w) = _as_images(x, shape)
    g = as_tensor(upstream).reshape(imgs.shape)
    B = imgs.shape[0]
    r0, c0, fy, fx, drow, dcol = _plan(phi, B, h, w)
    corners = _corners(r0, c0, h, w)
    v00, v01, v10, v11 = _gather(imgs, corners)

    weights = [(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx]
    flat = np.zeros(B * h * w)
    base = (np.arange(B) * h * w)[:, None, None]
    for (r, c, v), wt in zip(corners, weights):
        idx = (base + r * w + c).reshape(-1)
        flat += np.bincount(idx, weights=(g * wt * v).reshape(-1), minlength=B * h * w)
    gx = flat.reshape(imgs.shape)

    d_row = (1 - fx) * (v10 - v00) + fx * (v11 - v01)
    d_col = (1 - fy) * (v01 - v00) + fy * (v11 - v10)
    gphi = np.sum(g * (d_row * drow + d_col * dcol), axis=(1, 2))
    if shape is None:
        gx = gx.reshape(*lead, h, w)
    else:
        gx = gx.reshape(*lead, h * w)
    return gx, gphi


# --- angle grids and the angle codec -----------------------------------------

@dataclass(frozen=True)
class RotationGrid:
    angles: np.ndarray
    step: float

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=np.float64).reshape(-1)
        if a.size == 0:
            raise ConfigError("rotation grid is empty")
        if not self.step > 0:
            raise ConfigError("grid step must be positive")
        if np.any(a < -HALF_PI - 1e-12) or np.any(a >= HALF_PI):
            raise ConfigError("grid angles must lie in [-pi/2, pi/2)")
        object.__setattr__(self, "angles", a)

    @classmethod
    def uniform(cls, step_degrees: float = 1.0) -> "RotationGrid":
        step = np.deg2rad(step_degrees)
        count = int(round(180.0 / step_degrees))
        return cls(-HALF_PI + step * np.arange(count), step)

    @classmethod
    def single(cls, angle: float = 0.0) -> "RotationGrid":
        return cls(np.array([angle]), 1.0)

    def __len__(self):
        return self.angles.size


@dataclass(frozen=True)
class AngleCodec:
    """Uniform angle quantizer over the full circle.

    Index k stands for ``-180 + k * step`` degrees.
    """
    step_degrees: float = 2.5

    def __post_init__(self):
        if not self.step_degrees > 0:
            raise ConfigError("step_degrees must be positive")

    @property
    def size(self) -> int:
        return int(round(360.0 / self.step_degrees))

    @property
    def bits(self) -> float:
        return float(np.log2(self.size))

    def encode(self, phi) -> np.ndarray:
        deg = np.rad2deg(as_tensor(phi))
        k = np.round((deg + 180.0) / self.step_degrees).astype(np.int64)
        return np.mod(k, self.size)

    def decode(self, index) -> np.ndarray:
        index = np.asarray(index)
        if index.size and (index.min() < 0 or index.max() >= self.size):
            raise DimensionError(f"angle index outside [0, {self.size})")
        deg = -180.0 + self.step_degrees * index
        return np.deg2rad(deg)

    def quantize(self, phi) -> np.ndarray:
        return self.decode(self.encode(phi))


def wrap_half_turn(phi):
    """Map angles to [-pi/2, pi/2) modulo pi."""
    return np.mod(as_tensor(phi) + HALF_PI, np.pi) - HALF_PI


class AnglePredictor:
    """Image -> rotation angle in [-pi/2, pi/2).

    The network emits a 2-vector (u, v) read as the doubled angle, so the
    output is ``atan2(v, u) / 2``; bars and other half-turn symmetric shapes
    then have no discontinuity to learn across.
    """

    def __init__(self, net):
        if net[-1].out_width != 2:
            raise DimensionError("angle predictor network must output 2 values")
        self.net = net

    @classmethod
    def build(cls, n, hidden=64, seed=0) -> "AnglePredictor":
        rng = np.random.default_rng(seed)
        hidden = [hidden] if isinstance(hidden, (int, np.integer)) else list(hidden)
        widths = [n, *hidden, 2]
        acts = ["tanh"] * len(hidden) + ["identity"]
        return cls(build_network(widths, acts, rng))

    def parameters(self):
        return network_parameters(self.net)

    def set_parameters(self, params):
        set_network_parameters(self.net, params)

    def copy(self) -> "AnglePredictor":
        return AnglePredictor([layer.copy() for layer in self.net])

    def forward(self, x):
        uv, cache = forward(self.net, as_tensor(x))
        uv = np.atleast_2d(uv)
        phi = wrap_half_turn(0.5 * np.arctan2(uv[:, 1], uv[:, 0]))
        return phi, (cache, uv)

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, grad_phi):
        net_cache, uv = cache
        u, v = uv[:, 0], uv[:, 1]
        r2 = np.maximum(u * u + v * v, 1e-300)
        g = np.stack([-0.5 * v / r2, 0.5 * u / r2], axis=1) * as_tensor(grad_phi)[:, None]
        return backward(self.net, net_cache, g).parameters()


class PerfectPredictor:
    """Stub predictor that returns known angles (for oracle comparisons)."""

    def __init__(self, angles):
        self.angles = as_tensor(angles)

    def __call__(self, x):
        return np.broadcast_to(self.angles, (np.atleast_2d(x).shape[0],)).copy()


# --- end-to-end robust training ---------------------------------------------

def _per_angle_distortion(model, x, grid, shape, stage=None):
    A, B = len(grid), x.shape[0]
    xr = rotate(np.broadcast_to(x, (A, B, x.shape[1])).reshape(A * B, -1),
                np.repeat(grid.angles, B), shape)
    err = xr - reconstruct(model, xr, stage)
    return np.sum(err * err, axis=1).reshape(A, B).mean(axis=1)


def inner_max_angle(model, x, grid: RotationGrid, shape, stage=None):
    """Batch-mean distortion of the rotated batch at every grid angle;
    returns ``(phi*, distortion*)``, the first maximizer in grid order."""
    x = np.atleast_2d(as_tensor(x))
    d = _per_angle_distortion(model, x, grid, shape, stage)
    k = int(np.argmax(d))
    return float(grid.angles[k]), float(d[k])


def train_groupshift_dro(model, data, grid: RotationGrid, cfg: DroConfig, shape,
                         stage=None) -> TrainResult:
    """Every batch is rotated by its own worst grid angle before the step."""

    def perturb(m, xb, st, rng):
        phi, _ = inner_max_angle(m, xb, grid, shape, st)
        return rotate(xb, phi, shape)

    return train_loop(model, data, cfg, perturb=perturb, stage=stage)


# --- structured pipeline -----------------------------------------------------

def structured_groupshift_encode(x, predictor, codec: AngleCodec, base, shape):
    """Predict the angle, send its codec index, derotate and code with ``base``."""
    x = np.atleast_2d(as_tensor(x))
    idx = codec.encode(predictor(x))
    derot = rotate(x, -codec.decode(idx), shape)
    return idx, compress(base, derot)


def structured_groupshift_decode(angle_index, latent_indices, codec: AngleCodec, base, shape):
    phi = codec.decode(angle_index)
    xhat = decompress(base, latent_indices)
    return rotate(np.atleast_2d(xhat), phi, shape)


def structured_rate(codec: AngleCodec, base) -> tuple[float, float]:
    """``(R1, R2)`` in bits: angle index and base latent code."""
    return codec.bits, base.rate()


def structured_reconstruct(x, predictor, codec, base, shape):
    idx, lat = structured_groupshift_encode(x, predictor, codec, base, shape)
    return structured_groupshift_decode(idx, lat, codec, base, shape)


def train_angle_predictor(predictor: AnglePredictor, base, data, grid: RotationGrid,
                          cfg: DroConfig, shape, codec: AngleCodec | None = None) -> TrainResult:
    """Fit the predictor to minimize the pipeline's reconstruction error.

    Each sample gets an angle drawn uniformly from the grid; the base
    compressor stays frozen. The angle quantizer passes gradients straight
    through (identity backward).
    """
    codec = codec or AngleCodec()
    x = samples_of(data)
    predictor = predictor.copy()
    shuffle_rng, angle_rng = (np.random.default_rng(s)
                              for s in np.random.SeedSequence(cfg.seed).spawn(2))
    result = TrainResult(predictor)
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], cfg.batch_size):
            xb = x[order[start:start + cfg.batch_size]]
            phis = grid.angles[angle_rng.integers(0, len(grid), xb.shape[0])]
            xr = rotate(xb, phis, shape)
            loss, grads = _predictor_loss_grads(predictor, base, xr, codec, shape)
            predictor.set_parameters(sgd_step(predictor.parameters(), grads, cfg.outer_lr))
            result.losses.append(loss)
    return result


def _predictor_loss_grads(predictor, base, xr, codec, shape):
    B = xr.shape[0]
    phi, pcache = predictor.forward(xr)
    phi_q = codec.quantize(phi)
    derot = rotate(xr, -phi_q, shape)
    xhat_d, bcache = forward_pass(base, derot)
    xhat = rotate(xhat_d, phi_q, shape)
    err = xr - xhat
    loss = float(np.mean(np.sum(err * err, axis=1)))
    g_xhat = -2.0 * err / B
    g_xhat_d, gphi_out = rotate_vjp(xhat_d, phi_q, g_xhat, shape)
    _, g_derot = backward_pass(base, bcache, g_xhat_d)
    _, gpsi = rotate_vjp(xr, -phi_q, g_derot, shape)
    gphi = gphi_out - gpsi  # straight through the angle quantizer
    return loss, predictor.backward(pcache, gphi)


def pipeline_loss(predictor, base, x, angles, codec, shape) -> float:
    """Mean reconstruction error of the structured pipeline on ``x`` rotated by ``angles``."""
    xr = rotate(np.atleast_2d(x), angles, shape)
    err = xr - structured_reconstruct(xr, predictor, codec, base, shape)
    return float(np.mean(np.sum(err * err, axis=1)))


# --- data augmentation and evaluation -----------------------------------------

def draw_angles(count, rng) -> np.ndarray:
    return rng.uniform(-HALF_PI, HALF_PI, size=count)


def augment_rotations(data, mode: str, shape, seed: int = 0) -> np.ndarray:
    """``rotated_only`` replaces each image by a randomly rotated copy;
    ``rotated_plus_original`` appends the rotated copies to the originals."""
    x = samples_of(data)
    rng = np.random.default_rng(seed)
    rotated = rotate(x, draw_angles(x.shape[0], rng), shape)
    if mode == "rotated_only":
        return rotated
    if mode == "rotated_plus_original":
        return np.concatenate([x, rotated], axis=0)
    raise ConfigError(f"unknown augmentation mode {mode!r}")


def distortion_vs_angle(reconstruct_fn, data, grid: RotationGrid, shape) -> np.ndarray:
    """Mean distortion of ``reconstruct_fn`` on the data rotated to each grid angle."""
    x = samples_of(data)
    out = np.empty(len(grid))
    for k, phi in enumerate(grid.angles):
        xr = rotate(x, phi, shape)
        err = xr - reconstruct_fn(xr)
        out[k] = np.mean(np.sum(err * err, axis=1))
    return out


def angle_error_degrees(pred, true) -> np.ndarray:
    """Absolute angle difference modulo a half turn, in degrees."""
    d = wrap_half_turn(as_tensor(pred) - as_tensor(true))
    return np.abs(np.rad2deg(d))
