"""Worst-case distortion curves.

For each Lagrange multiplier gamma the inner ascent is run against a frozen
model; the mean transport cost it spends is the achieved radius and the
mean distortion there is the worst-case estimate at that radius. Sweeping
gamma from large to small traces the curve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dro import adversarial_distortion
from .errors import ConfigError, RangeError
from .training import DroConfig


@dataclass
class RunRecord:
    gamma: float
    rho_hat: float
    mean_distortion: float
    model_id: str = ""
    stage: str = ""

    def __post_init__(self):
        if self.rho_hat < 0 or self.mean_distortion < 0:
            raise ValueError("rho_hat and mean_distortion must be >= 0")


RECORD_FIELDS = ("model_id", "stage", "gamma", "rho_hat", "mean_distortion")


def wcd_curve(model, dataset, gamma_grid, cfg: DroConfig, stage=None,
              model_id: str = "") -> list[RunRecord]:
    """One record per gamma, in the order given (which must be decreasing)."""
    gammas = [float(g) for g in gamma_grid]
    if not gammas:
        raise ConfigError("gamma grid is empty")
    if any(b >= a for a, b in zip(gammas, gammas[1:])):
        raise ConfigError("gamma grid must be strictly decreasing")
    out = []
    for g in gammas:
        rho, dist, _ = adversarial_distortion(model, dataset, cfg.replace(gamma=g), stage)
        out.append(RunRecord(g, rho, dist, model_id, "" if stage is None else str(stage)))
    return out


class WorstCaseCurve:
    """Piecewise-linear worst-case distortion as a function of radius.

    Points are sorted by radius and the distortion is replaced by its running
    maximum: a larger transport budget can never lower the supremum, so a
    dip only means the ascent found a weaker point at that gamma.
    """

    def __init__(self, records):
        records = list(records)
        if not records:
            raise ConfigError("no curve points")
        r = np.array([rec.rho_hat for rec in records])
        d = np.array([rec.mean_distortion for rec in records])
        order = np.argsort(r, kind="stable")
        self.radii = r[order]
        self.raw = d[order]
        self.values = np.maximum.accumulate(self.raw)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.radii[0]), float(self.radii[-1])

    def __call__(self, rho: float) -> float:
        lo, hi = self.span
        if not lo <= rho <= hi:
            raise RangeError(f"radius {rho} outside the evaluated range [{lo}, {hi}]")
        return float(np.interp(rho, self.radii, self.values))

    def at_zero(self) -> float:
        """Distortion at the smallest evaluated radius."""
        return float(self.values[0])
