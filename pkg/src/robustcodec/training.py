"""Shared minibatch SGD loop and the training configuration."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .codec import distortion_and_grads
from .errors import ConfigError, NumericalError
from .tensor import as_tensor, sgd_step


@dataclass
class DroConfig:
    gamma: float = 1.0
    inner_steps: int = 0
    outer_lr: float = 0.01
    inner_lr_scale: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    clip: Optional[tuple] = None  # optional (low, high) box for the inner ascent

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.inner_steps < 0:
            raise ConfigError(f"inner_steps must be >= 0, got {self.inner_steps}")
        if not self.outer_lr > 0:
            raise ConfigError(f"outer_lr must be positive, got {self.outer_lr}")
        if not self.inner_lr_scale > 0:
            raise ConfigError("inner_lr_scale must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")

    def replace(self, **changes) -> "DroConfig":
        d = asdict(self)
        d.update(changes)
        return DroConfig(**d)


@dataclass
class TrainResult:
    model: object
    losses: list = field(default_factory=list)
    stages: list = field(default_factory=list)


def samples_of(data) -> np.ndarray:
    x = getattr(data, "samples", data)
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigError("training data must be a non-empty (count, n) array")
    return x


def train_loop(model, data, cfg: DroConfig,
               perturb: Callable | None = None,
               choose_stage: Callable | None = None,
               stage=None) -> TrainResult:
    """Plain SGD on the mean distortion of (possibly perturbed) minibatches.

    ``perturb(model, batch, stage, rng)`` maps a clean batch to the inputs
    the step is taken on; ``choose_stage(rng)`` picks a decoder per batch.
    Three independent RNG streams (shuffle, stage choice, perturbation) are
    derived from ``cfg.seed`` so that turning one feature off leaves the
    others' draws unchanged.
    """
    x = samples_of(data)
    model = model.copy()
    shuffle_rng, stage_rng, noise_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(3))
    result = TrainResult(model)
    step = 0
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], cfg.batch_size):
            xb = x[order[start:start + cfg.batch_size]]
            st = choose_stage(stage_rng) if choose_stage is not None else stage
            xin = perturb(model, xb, st, noise_rng) if perturb is not None else xb
            loss, grads, _ = distortion_and_grads(model, xin, st)
            params = sgd_step(model.parameters(), grads, cfg.outer_lr)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise NumericalError("non-finite parameters after SGD update", step=step)
            model.set_parameters(params)
            result.losses.append(loss)
            result.stages.append(st)
            step += 1
    return result


def train_standard(model, data, cfg: DroConfig, stage=None) -> TrainResult:
    """Plain distortion minimization on clean data."""
    return train_loop(model, data, cfg, stage=stage)
