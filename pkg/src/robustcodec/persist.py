"""Checkpoints and CSV results.

Checkpoint layout (all integers little-endian)::

    8 bytes   magic  b"RCODECK\\0"
    4 bytes   uint32 format version
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON header (sorted keys): model kind, network layer
              shapes and activations, codebook size/temperature/learnable,
              training config echo, seed
    rest      float64 parameters: per network, per layer, weights
              (out x in, row major) then bias; codebook centers last
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .codec import StandardCompressor, StructuredCompressor
from .errors import FormatError
from .groupshift import AnglePredictor
from .quantizer import Codebook
from .tensor import DenseLayer

MAGIC = b"RCODECK\0"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


def _net_header(net):
    return [[layer.in_width, layer.out_width, layer.activation] for layer in net]


def _net_arrays(net):
    out = []
    for layer in net:
        out.extend([layer.weights, layer.bias])
    return out


def _model_layout(model):
    if isinstance(model, AnglePredictor):
        return "angle_predictor", {"predictor": model.net}, None
    if isinstance(model, StructuredCompressor):
        nets = {"encoder": model.encoder, "decoder1": model.decoders[1],
                "decoder2": model.decoders[2]}
        return "structured", nets, model.codebook
    if isinstance(model, StandardCompressor):
        return "standard", {"encoder": model.encoder, "decoder": model.decoder}, model.codebook
    raise FormatError(f"cannot checkpoint a {type(model).__name__}")


def checkpoint_bytes(model, config: dict | None = None, seed: int | None = None) -> bytes:
    kind, nets, cb = _model_layout(model)
    header = {
        "kind": kind,
        "networks": [[name, _net_header(net)] for name, net in nets.items()],
        "codebook": None if cb is None else {
            "size": cb.size, "temperature": cb.temperature, "learnable": cb.learnable},
        "config": config or {},
        "seed": seed,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    arrays = []
    for net in nets.values():
        arrays.extend(_net_arrays(net))
    if cb is not None:
        arrays.append(cb.centers)
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + payload


def save_checkpoint(path, model, config: dict | None = None, seed: int | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, config, seed))


def load_checkpoint(path):
    """Returns ``(model, header)``."""
    return parse_checkpoint(Path(path).read_bytes())


def parse_checkpoint(raw: bytes):
    if len(raw) < _PREFIX.size:
        raise FormatError("checkpoint too short", offset=len(raw))
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError("not a checkpoint file", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=8)
    start = _PREFIX.size
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}", offset=start) from None
    pos = start + hlen

    def take(count):
        nonlocal pos
        end = pos + 8 * count
        if end > len(raw):
            raise FormatError("truncated parameter block", offset=len(raw))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).astype(np.float64)
        pos = end
        return arr

    nets = {}
    for name, layers in header["networks"]:
        net = []
        for fan_in, fan_out, act in layers:
            w = take(fan_in * fan_out).reshape(fan_out, fan_in)
            b = take(fan_out)
            net.append(DenseLayer(w, b, act))
        nets[name] = net
    cbh = header["codebook"]
    cb = None
    if cbh is not None:
        cb = Codebook(take(cbh["size"]), cbh["temperature"], cbh["learnable"])
    if pos != len(raw):
        raise FormatError("trailing bytes after parameters", offset=pos)

    kind = header["kind"]
    if kind == "standard":
        model = StandardCompressor(nets["encoder"], nets["decoder"], cb)
    elif kind == "structured":
        model = StructuredCompressor(nets["encoder"], nets["decoder1"], nets["decoder2"], cb)
    elif kind == "angle_predictor":
        model = AnglePredictor(nets["predictor"])
    else:
        raise FormatError(f"unknown model kind {kind!r}", offset=start)
    return model, header


# --- CSV ---------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path, fields, rows) -> None:
    """``rows`` are dicts keyed by ``fields``; reals carry 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row[f]) for f in fields])


def emit_csv(records, path) -> None:
    """Write a list of :class:`~robustcodec.evaluate.RunRecord`."""
    from .evaluate import RECORD_FIELDS

    write_csv(path, RECORD_FIELDS, [vars(r) for r in records])


def _parse(cell):
    for conv in (int, float):
        try:
            return conv(cell)
        except ValueError:
            pass
    return cell


def read_csv(path) -> list[dict]:
    """Numbers come back as int/float where they parse, else strings."""
    with open(path, newline="") as fh:
        try:
            rows = list(csv.DictReader(fh))
        except csv.Error as exc:
            raise FormatError(f"CSV parse failure: {exc}") from None
    return [{k: _parse(v) for k, v in row.items()} for row in rows]


def read_records(path):
    from .evaluate import RunRecord

    out = []
    for row in read_csv(path):
        out.append(RunRecord(float(row["gamma"]), float(row["rho_hat"]),
                             float(row["mean_distortion"]), str(row["model_id"]),
                             "" if row["stage"] == "" else str(row["stage"])))
    return out
