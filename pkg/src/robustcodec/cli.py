"""Command-line entry point.

    robustcodec <subcommand> <config-file> [--set key=value ...]

Exit codes: 0 success, 1 I/O or file-format problem, 2 usage or
configuration error, 3 numerical failure, 4 a theory check failed.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import codec, data as datamod, dro, groupshift as gs, qtheory
from .config import load_config, parse_source
from .errors import ConfigError, FormatError, NumericalError, UsageError
from .evaluate import wcd_curve
from .persist import emit_csv, load_checkpoint, save_checkpoint, write_csv
from .training import DroConfig

SUBCOMMANDS = (
    "train-standard", "train-dro", "train-structured", "train-groupshift",
    "train-anglepred", "eval-wcd", "eval-rotation", "theory-verify",
    "theory-minimax", "augment-awgn",
)
THEORY_FIELDS = ("N", "delta", "D_1_opt", "D_1_minimax", "V_opt1", "V_opt1pd",
                 "V_minimax", "margin")


def load_source(spec: str, pool: int = 1) -> datamod.Dataset:
    kind, what, opts = parse_source(spec)
    if kind == "synth":
        opts = dict(opts)
        n = opts.pop("n", None)
        count = opts.pop("count", None)
        seed = opts.pop("seed", 0)
        if n is None or count is None:
            raise ConfigError("synthetic source needs n= and count=")
        ds = datamod.synth_source(what, int(n), int(count), int(seed), **opts)
    else:
        ds = datamod.load_idx(what)
    if pool > 1:
        ds = datamod.downsample(ds, pool)
    return ds


def dro_config(cfg) -> DroConfig:
    clip = tuple(cfg.clip) if cfg.clip else None
    if clip is not None and len(clip) != 2:
        raise ConfigError("clip takes two values: low, high")
    return DroConfig(gamma=cfg.gamma, inner_steps=cfg.inner_steps, outer_lr=cfg.lr,
                     inner_lr_scale=cfg.inner_lr_scale, epochs=cfg.epochs,
                     batch_size=cfg.batch_size, seed=cfg.seed, clip=clip)


def _need(cfg, key):
    v = getattr(cfg, key)
    if v is None:
        raise ConfigError(f"missing required key {key!r}")
    return v


def _train_data(cfg):
    return load_source(_need(cfg, "data"), cfg.pool)


def _initial_model(cfg, n, structured=False):
    if cfg.init:
        model, _ = load_checkpoint(cfg.init)
        return model
    common = dict(hidden=list(cfg.hidden), levels=cfg.codebook_size,
                  temperature=cfg.temperature, learnable=cfg.learnable_codebook,
                  seed=cfg.seed)
    if structured:
        return codec.build_structured(n, cfg.m1, cfg.m2, **common)
    return codec.build_standard(n, cfg.latent_m, **common)


def _finish_training(cfg, name, result, ds, stage=None):
    ckpt = _need(cfg, "checkpoint")
    save_checkpoint(ckpt, result.model, cfg.explicit(), cfg.seed)
    if cfg.csv:
        rows = [{"step": i, "stage": "" if s is None else s, "loss": float(loss)}
                for i, (loss, s) in enumerate(zip(result.losses, result.stages))]
        write_csv(cfg.csv, ("step", "stage", "loss"), rows)
    final = result.losses[-1] if result.losses else float("nan")
    clean = codec.distortion(result.model, ds.samples, stage)
    print(f"{name}: {len(result.losses)} steps, last batch loss {final:.6g}, "
          f"clean distortion {clean:.6g}, rate {result.model.rate(stage):.2f} bits -> {ckpt}")


def _shape(ds):
    if ds.image_shape is None:
        raise ConfigError("this subcommand needs image data")
    return ds.image_shape


def cmd_train_standard(cfg):
    ds = _train_data(cfg)
    samples = ds.samples
    if cfg.augment != "none":
        samples = gs.augment_rotations(ds, cfg.augment, _shape(ds), cfg.seed)
    model = _initial_model(cfg, ds.n)
    res = dro.train_standard(model, samples, dro_config(cfg))
    _finish_training(cfg, "train-standard", res, ds)


def cmd_train_dro(cfg):
    ds = _train_data(cfg)
    model = _initial_model(cfg, ds.n)
    res = dro.train_dro(model, ds, dro_config(cfg))
    _finish_training(cfg, "train-dro", res, ds)


def cmd_augment_awgn(cfg):
    ds = _train_data(cfg)
    model = _initial_model(cfg, ds.n)
    res = dro.awgn_augment_train(model, ds, cfg.rho, dro_config(cfg))
    _finish_training(cfg, "augment-awgn", res, ds)


def cmd_train_structured(cfg):
    ds = _train_data(cfg)
    model = _initial_model(cfg, ds.n, structured=True)
    res = codec.train_structured(model, ds, dro_config(cfg))
    _finish_training(cfg, "train-structured", res, ds, stage=2)


def cmd_train_groupshift(cfg):
    ds = _train_data(cfg)
    model = _initial_model(cfg, ds.n)
    grid = gs.RotationGrid.uniform(cfg.grid_step_degrees)
    res = gs.train_groupshift_dro(model, ds, grid, dro_config(cfg), _shape(ds))
    _finish_training(cfg, "train-groupshift", res, ds)


def cmd_train_anglepred(cfg):
    ds = _train_data(cfg)
    base, _ = load_checkpoint(_need(cfg, "model"))
    if cfg.init:
        pred, _ = load_checkpoint(cfg.init)
    else:
        pred = gs.AnglePredictor.build(ds.n, list(cfg.hidden), cfg.seed)
    grid = gs.RotationGrid.uniform(cfg.grid_step_degrees)
    codec_ = gs.AngleCodec(cfg.angle_step_degrees)
    res = gs.train_angle_predictor(pred, base, ds, grid, dro_config(cfg), _shape(ds), codec_)
    ckpt = _need(cfg, "checkpoint")
    save_checkpoint(ckpt, res.model, cfg.explicit(), cfg.seed)
    if cfg.csv:
        write_csv(cfg.csv, ("step", "loss"),
                  [{"step": i, "loss": float(v)} for i, v in enumerate(res.losses)])
    print(f"train-anglepred: {len(res.losses)} steps, last batch loss "
          f"{res.losses[-1] if res.losses else float('nan'):.6g}, "
          f"angle bits {codec_.bits:.2f} -> {ckpt}")


def _model_list(cfg):
    paths = [p.strip() for p in _need(cfg, "model").split(",") if p.strip()]
    return [(Path(p).stem, load_checkpoint(p)[0]) for p in paths]


def _stage_of(model, cfg):
    if isinstance(model, codec.StructuredCompressor):
        return int(cfg.stage) if cfg.stage else 2
    return None


def cmd_eval_wcd(cfg):
    ds = load_source(_need(cfg, "test_data"), cfg.pool)
    records = []
    for name, model in _model_list(cfg):
        records += wcd_curve(model, ds, cfg.gamma_grid, dro_config(cfg),
                             stage=_stage_of(model, cfg), model_id=name)
    out = _need(cfg, "csv")
    emit_csv(records, out)
    print(f"eval-wcd: {len(records)} curve points over {len(ds)} samples -> {out}")


def cmd_eval_rotation(cfg):
    ds = load_source(_need(cfg, "test_data"), cfg.pool)
    shape = _shape(ds)
    grid = gs.RotationGrid.uniform(cfg.grid_step_degrees)
    curves = []
    for name, model in _model_list(cfg):
        stage = _stage_of(model, cfg)
        curves.append((name, gs.distortion_vs_angle(
            lambda x, m=model, s=stage: codec.reconstruct(m, x, s), ds, grid, shape)))
    if cfg.predictor:
        pred, _ = load_checkpoint(cfg.predictor)
        base, _ = load_checkpoint(_need(cfg, "base"))
        codec_ = gs.AngleCodec(cfg.angle_step_degrees)
        curves.append(("structured", gs.distortion_vs_angle(
            lambda x: gs.structured_reconstruct(x, pred, codec_, base, shape), ds, grid, shape)))
    rows = [{"model_id": name, "angle_degrees": float(np.rad2deg(a)), "mean_distortion": float(v)}
            for name, curve in curves for a, v in zip(grid.angles, curve)]
    out = _need(cfg, "csv")
    write_csv(out, ("model_id", "angle_degrees", "mean_distortion"), rows)
    print(f"eval-rotation: {len(curves)} models x {len(grid)} angles -> {out}")


def _theory_row(pair, starts, seed):
    res = qtheory.minimax_search(pair, n_random=starts, seed=seed)
    return qtheory.verify_theorem1(pair, res, strict=False)


def _write_theory(cfg, reports, name):
    out = _need(cfg, "csv")
    write_csv(out, THEORY_FIELDS, [r.row() for r in reports])
    bad = [r for r in reports if not r.holds]
    print(f"{name}: {len(reports)} cases, {len(bad)} violations, "
          f"smallest margin {min(r.margin for r in reports):.3g} -> {out}")
    return 4 if bad else 0


def cmd_theory_verify(cfg):
    reports = []
    for N in cfg.theory_N:
        for frac in cfg.theory_delta_fracs:
            pair = qtheory.UniformPair(N, frac / N)
            reports.append(_theory_row(pair, cfg.theory_starts, cfg.seed))
    return _write_theory(cfg, reports, "theory-verify")


def cmd_theory_minimax(cfg):
    N = cfg.theory_N[0]
    pair = qtheory.UniformPair(N, cfg.theory_delta)
    rep = _theory_row(pair, cfg.theory_starts, cfg.seed)
    code = _write_theory(cfg, [rep], "theory-minimax")
    print("minimax lengths: " + " ".join("%.10g" % v for v in rep.minimax_lengths))
    return code


COMMANDS = {
    "train-standard": cmd_train_standard,
    "train-dro": cmd_train_dro,
    "train-structured": cmd_train_structured,
    "train-groupshift": cmd_train_groupshift,
    "train-anglepred": cmd_train_anglepred,
    "eval-wcd": cmd_eval_wcd,
    "eval-rotation": cmd_eval_rotation,
    "theory-verify": cmd_theory_verify,
    "theory-minimax": cmd_theory_minimax,
    "augment-awgn": cmd_augment_awgn,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def main(argv=None) -> int:
    parser = _Parser(prog="robustcodec", description="Robust learned compression experiments.")
    parser.add_argument("subcommand")
    parser.add_argument("config")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry")
    try:
        args = parser.parse_args(argv)
        if args.subcommand not in COMMANDS:
            raise UsageError(f"unknown subcommand {args.subcommand!r}; "
                             f"expected one of {', '.join(SUBCOMMANDS)}")
        cfg = load_config(args.config, args.set)
        return COMMANDS[args.subcommand](cfg) or 0
    except (UsageError, ConfigError) as exc:
        print(f"robustcodec: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"robustcodec: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (FormatError, OSError) as exc:
        print(f"robustcodec: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
