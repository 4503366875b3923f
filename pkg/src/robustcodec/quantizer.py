"""Scalar latent quantization.

The forward pass snaps every latent entry to its nearest codebook center.
Training uses a straight-through scheme: the hard value goes forward, the
Jacobian of a softmax-weighted soft quantizer comes back.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor import as_tensor

DEFAULT_LEVELS = 12


@dataclass
class Codebook:
    centers: np.ndarray
    temperature: float = 1.0
    learnable: bool = False

    def __post_init__(self):
        self.centers = as_tensor(self.centers).reshape(-1)
        if self.centers.size == 0:
            raise ConfigError("empty codebook")
        if self.centers.size < 2:
            raise ConfigError("codebook needs at least two centers")
        if not np.all(np.diff(self.centers) > 0):
            raise ConfigError("codebook centers must be strictly increasing")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")

    @property
    def size(self) -> int:
        return self.centers.size

    @classmethod
    def uniform(cls, levels: int = DEFAULT_LEVELS, low=-1.0, high=1.0,
                temperature=1.0, learnable=False) -> "Codebook":
        return cls(np.linspace(low, high, levels), temperature, learnable)

    def copy(self) -> "Codebook":
        return Codebook(self.centers.copy(), self.temperature, self.learnable)


def hard_quantize(z, cb: Codebook) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-center quantization; ties go to the smaller center.

    Returns ``(values, indices)`` with the shape of ``z``.
    """
    if cb.centers.size == 0:
        raise ConfigError("empty codebook")
    z = as_tensor(z)
    dist = np.abs(z[..., None] - cb.centers)
    # argmin returns the first minimum, i.e. the smaller center on a tie
    idx = np.argmin(dist, axis=-1)
    return cb.centers[idx], idx


def _soft_weights(z, cb):
    logits = -((z[..., None] - cb.centers) ** 2) / cb.temperature
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def soft_quantize(z, cb: Codebook) -> np.ndarray:
    z = as_tensor(z)
    return _soft_weights(z, cb) @ cb.centers


def soft_quantize_grad(z, cb: Codebook) -> np.ndarray:
    """Elementwise derivative of :func:`soft_quantize` wrt ``z``.

    With w = softmax(-(z - c)^2 / T) the derivative reduces to
    2 Var_w(c) / T.
    """
    z = as_tensor(z)
    w = _soft_weights(z, cb)
    mean = w @ cb.centers
    second = w @ (cb.centers * cb.centers)
    return 2.0 * np.maximum(second - mean * mean, 0.0) / cb.temperature


@dataclass
class STQuantized:
    values: np.ndarray  # hard forward values
    indices: np.ndarray
    local_grad: np.ndarray  # surrogate d(values)/dz, elementwise

    def backward(self, upstream) -> np.ndarray:
        return as_tensor(upstream) * self.local_grad

    def center_grad(self, upstream, cb: Codebook) -> np.ndarray:
        """Gradient wrt centers: each hard value is exactly one center."""
        return np.bincount(self.indices.reshape(-1),
                           weights=as_tensor(upstream).reshape(-1),
                           minlength=cb.size)


def st_quantize(z, cb: Codebook) -> STQuantized:
    values, idx = hard_quantize(z, cb)
    return STQuantized(values, idx, soft_quantize_grad(z, cb))


def rate(m: int, cb_or_levels) -> float:
    """Fixed rate in bits of an ``m``-entry latent code."""
    levels = cb_or_levels.size if isinstance(cb_or_levels, Codebook) else int(cb_or_levels)
    if m < 1:
        raise ConfigError(f"latent width must be >= 1, got {m}")
    return m * float(np.log2(levels))
