"""Line-based ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key must be known; the
value is parsed according to the key's type. Data sources are given either
as a file path (IDX) or as ``synth:<kind>:k=v,k=v`` for a synthetic source,
e.g. ``synth:gaussian_mixture:n=8,count=2000,seed=1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s):
    return tuple(int(v) for v in s.split(",") if v.strip())


def _floats(s):
    return tuple(float(v) for v in s.split(",") if v.strip())


def _opt_str(s):
    return s or None


# key -> (parser, default)
SCHEMA = {
    "seed": (int, 0),
    "epochs": (int, 10),
    "batch_size": (int, 32),
    "lr": (float, 0.01),
    "gamma": (float, 1.0),
    "inner_steps": (int, 0),
    "inner_lr_scale": (float, 0.1),
    "clip": (_floats, ()),
    "latent_m": (int, 10),
    "m1": (int, 4),
    "m2": (int, 6),
    "codebook_size": (int, 12),
    "temperature": (float, 1.0),
    "learnable_codebook": (_bool, False),
    "hidden": (_ints, (128,)),
    "data": (_opt_str, None),
    "test_data": (_opt_str, None),
    "pool": (int, 1),
    "init": (_opt_str, None),
    "model": (_opt_str, None),
    "predictor": (_opt_str, None),
    "base": (_opt_str, None),
    "stage": (_opt_str, None),
    "checkpoint": (_opt_str, None),
    "csv": (_opt_str, None),
    "gamma_grid": (_floats, (1e9, 10.0, 3.0, 2.0, 1.5, 1.2, 1.1)),
    "rho": (float, 0.0),
    "grid_step_degrees": (float, 1.0),
    "angle_step_degrees": (float, 2.5),
    "augment": (str, "none"),
    "theory_N": (_ints, (2, 3, 4, 5, 6, 7, 8)),
    "theory_delta_fracs": (_floats, (0.25, 0.5, 0.9)),
    "theory_delta": (float, 0.0),
    "theory_starts": (int, 8),
}


OUTPUT_KEYS = ("checkpoint", "csv")


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    given: tuple = ()  # keys set explicitly, in file order

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def explicit(self) -> dict:
        """The explicitly given settings minus output paths (echoed into
        checkpoints, so the same run written elsewhere is byte-identical)."""
        return {k: _jsonable(self.values[k]) for k in sorted(self.given)
                if k not in OUTPUT_KEYS}


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def parse_config(text: str, overrides=()) -> RunConfig:
    values = {k: d for k, (_, d) in SCHEMA.items()}
    given = []
    lines = list(text.splitlines()) + list(overrides)
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = SCHEMA[key][0](raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        if key not in given:
            given.append(key)
    return RunConfig(values, tuple(given))


def load_config(path, overrides=()) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)


def parse_source(spec: str):
    """``synth:kind:k=v,...`` -> ``("synth", kind, options)``; else ``("idx", path, {})``."""
    if not spec.startswith("synth:"):
        return "idx", spec, {}
    parts = spec.split(":", 2)
    kind = parts[1]
    opts = {}
    if len(parts) == 3 and parts[2]:
        for item in parts[2].split(","):
            if "=" not in item:
                raise ConfigError(f"bad synthetic option {item!r}")
            k, v = (s.strip() for s in item.split("=", 1))
            opts[k] = _number(v)
    return "synth", kind, opts


def _number(v):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v
