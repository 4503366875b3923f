"""Reference desk-scale experiments.

Each recipe trains a small family of models from one seed and returns the
measurements needed to compare them. Defaults are sized to finish in a
minute or two on one CPU core.

Worst-case training starts from a converged standard model: the robust,
noise-augmented and standard variants all continue from the same warm
start for the same number of steps at the same learning rate, so any
difference between them comes from the training objective alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import groupshift as gs
from .codec import build_standard, build_structured, compress, reconstruct, train_structured
from .data import synth_source
from .dro import achieved_radius, awgn_augment_train, train_dro, train_standard
from .evaluate import WorstCaseCurve, wcd_curve
from .training import DroConfig

EVAL_GAMMAS = (1e9, 5.0, 3.0, 2.0, 1.5, 1.3, 1.2, 1.1, 1.05, 1.02, 1.01)


@dataclass
class MixtureSetup:
    n: int = 8
    components: int = 4
    rank: int = 2
    spread: float = 0.3
    train_count: int = 1000
    test_count: int = 500
    m: int = 10
    hidden: int = 16
    warm: tuple = ((0.05, 600), (0.02, 600), (0.01, 600))  # (lr, epochs) phases of the warm start
    lr: float = 0.01
    epochs: int = 600
    batch_size: int = 32
    inner_steps: int = 10
    inner_lr_scale: float = 1.0
    eval_gammas: tuple = EVAL_GAMMAS

    def data(self):
        opts = dict(components=self.components, rank=self.rank, spread=self.spread)
        train = synth_source("gaussian_mixture", self.n, self.train_count, seed=1, **opts)
        test = synth_source("gaussian_mixture", self.n, self.test_count, seed=2, **opts)
        return train, test

    def phase(self, seed, gamma=1.0) -> DroConfig:
        return DroConfig(gamma=gamma, inner_steps=self.inner_steps, outer_lr=self.lr,
                         inner_lr_scale=self.inner_lr_scale, epochs=self.epochs,
                         batch_size=self.batch_size, seed=seed + 200)

    def evaluator(self) -> DroConfig:
        return DroConfig(inner_steps=self.inner_steps, inner_lr_scale=self.inner_lr_scale)

    def warm_start(self, model, train, seed):
        for i, (lr, epochs) in enumerate(self.warm):
            cfg = DroConfig(outer_lr=lr, epochs=epochs, batch_size=self.batch_size,
                            seed=seed + 100 + i)
            model = train_standard(model, train, cfg).model
        return model

    def curve(self, model, test, stage=None, model_id=""):
        return WorstCaseCurve(wcd_curve(model, test, self.eval_gammas, self.evaluator(),
                                        stage=stage, model_id=model_id))


@dataclass
class TradeoffResult:
    seed: int
    rho_small: float
    rho_large: float
    curves: dict = field(default_factory=dict)  # name -> WorstCaseCurve

    def orderings(self) -> dict:
        """(a) standard beats robust on clean data; (b) robust beats standard
        at its trained radius; (c) noise augmentation lands in between
        there; (d) the larger-radius model pays more on clean data."""
        c = self.curves
        rho = self.rho_large
        std_r, rob_r, awgn_r = c["standard"](rho), c["dro_large"](rho), c["awgn"](rho)
        return {
            "a": c["standard"].at_zero() < c["dro_large"].at_zero(),
            "b": std_r > rob_r,
            "c": rob_r < awgn_r < std_r,
            "d": c["dro_small"].at_zero() < c["dro_large"].at_zero(),
        }

    def summary(self) -> dict:
        c = self.curves
        rho = self.rho_large
        return {
            "seed": self.seed, "rho_small": self.rho_small, "rho_large": rho,
            **{f"clean_{k}": v.at_zero() for k, v in c.items()},
            **{f"at_rho_{k}": v(rho) for k, v in c.items()},
        }


def tradeoff_experiment(seed: int, setup: MixtureSetup | None = None,
                        gamma_small: float = 2.0, gamma_large: float = 1.02) -> TradeoffResult:
    """Standard vs two robust models vs noise augmentation at the larger radius."""
    setup = setup or MixtureSetup()
    train, test = setup.data()
    warm = setup.warm_start(build_standard(setup.n, setup.m, hidden=setup.hidden, seed=seed),
                            train, seed)
    std = train_standard(warm, train, setup.phase(seed)).model
    small = train_dro(warm, train, setup.phase(seed, gamma_small)).model
    large = train_dro(warm, train, setup.phase(seed, gamma_large)).model
    rho_small = achieved_radius(small, train, setup.phase(seed, gamma_small)).rho_hat
    rho_large = achieved_radius(large, train, setup.phase(seed, gamma_large)).rho_hat
    awgn = awgn_augment_train(warm, train, rho_large, setup.phase(seed)).model
    res = TradeoffResult(seed, rho_small, rho_large)
    for name, model in (("standard", std), ("dro_small", small), ("dro_large", large),
                        ("awgn", awgn)):
        res.curves[name] = setup.curve(model, test, model_id=name)
    return res


@dataclass
class RefinementResult:
    seed: int
    m1: int
    m2: int
    structured: WorstCaseCurve
    end_to_end: WorstCaseCurve
    prefix_ok: bool
    rates: tuple  # (stage 1 bits, stage 2 bits, end-to-end bits)

    def common_radii(self, points: int = 25) -> np.ndarray:
        lo = max(self.structured.span[0], self.end_to_end.span[0])
        hi = min(self.structured.span[1], self.end_to_end.span[1])
        return np.linspace(lo, hi, points)

    def worst_ratio(self) -> float:
        """Largest structured / end-to-end worst-case ratio over the common radii."""
        r = self.common_radii()
        return float(max(self.structured(v) / self.end_to_end(v) for v in r))


def refinement_experiment(seed: int, m1: int, m2: int, setup: MixtureSetup | None = None,
                          gamma: float = 1.02) -> RefinementResult:
    """Structured two-stage code vs an end-to-end robust model of equal total rate."""
    setup = setup or MixtureSetup()
    train, test = setup.data()
    if m1 + m2 != setup.m:
        raise ValueError("split must use the same total latent width")
    e2e = setup.warm_start(build_standard(setup.n, setup.m, hidden=setup.hidden, seed=seed),
                           train, seed)
    e2e = train_dro(e2e, train, setup.phase(seed, gamma)).model

    model = build_structured(setup.n, m1, m2, hidden=setup.hidden, seed=seed)
    for i, (lr, epochs) in enumerate(setup.warm):
        cfg = DroConfig(gamma=1e9, inner_steps=0, outer_lr=lr, epochs=2 * epochs,
                        batch_size=setup.batch_size, seed=seed + 100 + i)
        model = train_structured(model, train, cfg).model  # each decoder sees ~half the batches
    phase = setup.phase(seed, gamma)
    model = train_structured(model, train, phase.replace(epochs=2 * phase.epochs)).model

    i1, i2 = compress(model, test.samples, 1), compress(model, test.samples, 2)
    return RefinementResult(
        seed, m1, m2,
        structured=setup.curve(model, test, stage=2, model_id="structured"),
        end_to_end=setup.curve(e2e, test, model_id="end_to_end"),
        prefix_ok=bool(np.array_equal(i2[:, :m1], i1)),
        rates=(model.rate(1), model.rate(2), e2e.rate()),
    )


@dataclass
class RotationSetup:
    side: int = 16
    train_count: int = 1000
    test_count: int = 300
    hidden: int = 64
    base_m: int = 8
    robust_m: int = 10
    lr: float = 0.05
    base_epochs: int = 60
    robust_epochs: int = 60
    predictor_epochs: int = 20
    train_grid_degrees: float = 5.0
    predictor_grid_degrees: float = 1.0
    eval_grid_degrees: float = 5.0


@dataclass
class RotationResult:
    seed: int
    structured: np.ndarray  # distortion per evaluation angle
    robust: np.ndarray
    base: np.ndarray
    angle_error_degrees: float
    rates: tuple  # (R1, R2, end-to-end bits)

    @staticmethod
    def flatness(curve) -> float:
        return float(np.max(curve) / np.min(curve))


def rotation_experiment(seed: int, setup: RotationSetup | None = None) -> RotationResult:
    """Predict-derotate-code pipeline vs rotation-robust end-to-end training."""
    setup = setup or RotationSetup()
    n = setup.side * setup.side
    train = synth_source("bars", n, setup.train_count, seed=10 + seed)
    test = synth_source("bars", n, setup.test_count, seed=1000 + seed)
    shape = train.image_shape
    cfg = DroConfig(outer_lr=setup.lr, epochs=setup.base_epochs, seed=seed)

    base = train_standard(build_standard(n, setup.base_m, hidden=setup.hidden, seed=seed),
                          train, cfg).model
    codec = gs.AngleCodec()
    pred = gs.train_angle_predictor(
        gs.AnglePredictor.build(n, setup.hidden, seed=seed), base, train,
        gs.RotationGrid.uniform(setup.predictor_grid_degrees),
        cfg.replace(epochs=setup.predictor_epochs), shape, codec).model
    robust = gs.train_groupshift_dro(
        build_standard(n, setup.robust_m, hidden=setup.hidden, seed=seed), train,
        gs.RotationGrid.uniform(setup.train_grid_degrees),
        cfg.replace(epochs=setup.robust_epochs), shape).model

    grid = gs.RotationGrid.uniform(setup.eval_grid_degrees)
    angles = np.random.default_rng(seed).uniform(-np.pi / 2, np.pi / 2, len(test))
    err = gs.angle_error_degrees(pred(gs.rotate(test.samples, angles, shape)), angles)
    return RotationResult(
        seed,
        structured=gs.distortion_vs_angle(
            lambda x: gs.structured_reconstruct(x, pred, codec, base, shape), test, grid, shape),
        robust=gs.distortion_vs_angle(lambda x: reconstruct(robust, x), test, grid, shape),
        base=gs.distortion_vs_angle(lambda x: reconstruct(base, x), test, grid, shape),
        angle_error_degrees=float(err.mean()),
        rates=(codec.bits, base.rate(), robust.rate()),
    )
