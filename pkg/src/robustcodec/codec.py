"""Quantized autoencoder compressors.

Two model kinds share one encoder/decoder machinery:

* ``StandardCompressor``: encoder to ``m`` latents, one decoder.
* ``StructuredCompressor``: encoder to ``m1 + m2`` latents; decoder 1 sees
  the first ``m1`` entries, decoder 2 sees all of them, so the stage-2 code
  always extends the stage-1 code.

Stages are addressed as ``None`` for the standard model and ``1``/``2``
for the structured one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quantizer as qz
from .errors import ConfigError, DimensionError, UsageError
from .tensor import (as_tensor, backward, build_network, forward,
                     network_parameters, set_network_parameters)

DEFAULT_HIDDEN = 128


class Compressor:
    kind = "abstract"
    stages: tuple = ()

    def __init__(self, encoder, decoders: dict, codebook: qz.Codebook):
        self.encoder = encoder
        self.decoders = decoders
        self.codebook = codebook

    @property
    def n(self) -> int:
        return self.encoder[0].in_width

    @property
    def latent_total(self) -> int:
        return self.encoder[-1].out_width

    def check_stage(self, stage):
        if stage not in self.stages:
            raise UsageError(f"{self.kind} compressor has no stage {stage!r}")
        return stage

    def latent_width(self, stage) -> int:
        return self.decoders[self.check_stage(stage)][0].in_width

    def rate(self, stage=None) -> float:
        return qz.rate(self.latent_width(stage), self.codebook)

    def networks(self) -> list:
        return [self.encoder] + [self.decoders[s] for s in self.stages]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for net in self.networks():
            out.extend(network_parameters(net))
        if self.codebook.learnable:
            out.append(self.codebook.centers)
        return out

    def set_parameters(self, params) -> None:
        params = list(params)
        for net in self.networks():
            k = 2 * len(net)
            set_network_parameters(net, params[:k])
            params = params[k:]
        if self.codebook.learnable:
            (centers,) = params
            self.codebook = qz.Codebook(np.sort(centers), self.codebook.temperature, True)
        elif params:
            raise DimensionError("too many parameters")

    def copy(self):
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.encoder = [layer.copy() for layer in self.encoder]
        clone.decoders = {s: [layer.copy() for layer in net]
                          for s, net in self.decoders.items()}
        clone.codebook = self.codebook.copy()
        return clone


class StandardCompressor(Compressor):
    kind = "standard"
    stages = (None,)

    def __init__(self, encoder, decoder, codebook):
        if encoder[-1].out_width != decoder[0].in_width:
            raise DimensionError("encoder output width != decoder input width")
        super().__init__(encoder, {None: decoder}, codebook)

    @property
    def decoder(self):
        return self.decoders[None]

    @property
    def m(self) -> int:
        return self.latent_total


class StructuredCompressor(Compressor):
    kind = "structured"
    stages = (1, 2)

    def __init__(self, encoder, decoder1, decoder2, codebook):
        total = encoder[-1].out_width
        if decoder2[0].in_width != total:
            raise DimensionError("decoder2 must read every latent entry")
        if not 0 < decoder1[0].in_width < total:
            raise DimensionError("decoder1 must read a proper prefix of the latent")
        super().__init__(encoder, {1: decoder1, 2: decoder2}, codebook)

    @property
    def m1(self) -> int:
        return self.decoders[1][0].in_width

    @property
    def m2(self) -> int:
        return self.latent_total - self.m1


def _mlp(widths, hidden_act, out_act, rng):
    acts = [hidden_act] * (len(widths) - 2) + [out_act]
    return build_network(widths, acts, rng)


def build_standard(n, m, hidden=DEFAULT_HIDDEN, levels=qz.DEFAULT_LEVELS,
                   temperature=1.0, learnable=False, seed=0) -> StandardCompressor:
    """Encoder n -> hidden -> m (tanh, so latents sit in the codebook range)
    and a mirrored decoder with identity output."""
    rng = np.random.default_rng(seed)
    hidden = _hidden_list(hidden)
    enc = _mlp([n, *hidden, m], "tanh", "tanh", rng)
    dec = _mlp([m, *hidden[::-1], n], "tanh", "identity", rng)
    cb = qz.Codebook.uniform(levels, temperature=temperature, learnable=learnable)
    return StandardCompressor(enc, dec, cb)


def build_structured(n, m1, m2, hidden=DEFAULT_HIDDEN, levels=qz.DEFAULT_LEVELS,
                     temperature=1.0, learnable=False, seed=0) -> StructuredCompressor:
    if m1 < 1 or m2 < 1:
        raise ConfigError("m1 and m2 must both be >= 1")
    rng = np.random.default_rng(seed)
    hidden = _hidden_list(hidden)
    enc = _mlp([n, *hidden, m1 + m2], "tanh", "tanh", rng)
    dec1 = _mlp([m1, *hidden[::-1], n], "tanh", "identity", rng)
    dec2 = _mlp([m1 + m2, *hidden[::-1], n], "tanh", "identity", rng)
    cb = qz.Codebook.uniform(levels, temperature=temperature, learnable=learnable)
    return StructuredCompressor(enc, dec1, dec2, cb)


def _hidden_list(hidden):
    if isinstance(hidden, (int, np.integer)):
        return [int(hidden)]
    return [int(h) for h in hidden]


@dataclass
class PassCache:
    stage: object
    enc_cache: object
    quant: qz.STQuantized
    dec_cache: object
    width: int
    squeeze: bool


def forward_pass(model: Compressor, x, stage=None) -> tuple[np.ndarray, PassCache]:
    """Training-mode pass: hard quantization forward, soft Jacobian cached."""
    model.check_stage(stage)
    x = as_tensor(x)
    if x.shape[-1] != model.n:
        raise DimensionError(f"input width {x.shape[-1]} != model width {model.n}")
    squeeze = x.ndim == 1
    xb = x[None, :] if squeeze else x
    z, enc_cache = forward(model.encoder, xb)
    width = model.latent_width(stage)
    quant = qz.st_quantize(z[:, :width], model.codebook)
    xhat, dec_cache = forward(model.decoders[stage], quant.values)
    cache = PassCache(stage, enc_cache, quant, dec_cache, width, squeeze)
    return (xhat[0] if squeeze else xhat), cache


def backward_pass(model: Compressor, cache: PassCache, grad_xhat):
    """Returns ``(param_grads, grad_x)`` for ``sum(grad_xhat * xhat)``.

    ``param_grads`` is aligned with ``model.parameters()``; decoders not used
    by the cached stage get zero gradients.
    """
    g = as_tensor(grad_xhat)
    if cache.squeeze:
        g = g[None, :]
    dec_tape = backward(model.decoders[cache.stage], cache.dec_cache, g)
    g_latent = cache.quant.backward(dec_tape.input)
    g_z = np.zeros((g.shape[0], model.latent_total))
    g_z[:, :cache.width] = g_latent
    enc_tape = backward(model.encoder, cache.enc_cache, g_z)

    grads = list(enc_tape.parameters())
    for s in model.stages:
        if s == cache.stage:
            grads.extend(dec_tape.parameters())
        else:
            grads.extend(np.zeros_like(p) for p in network_parameters(model.decoders[s]))
    if model.codebook.learnable:
        grads.append(cache.quant.center_grad(dec_tape.input, model.codebook))
    gx = enc_tape.input
    return grads, (gx[0] if cache.squeeze else gx)


def distortion_and_grads(model, x, stage=None, target=None):
    """Mean over the batch of ``||target - xhat(x)||^2`` (target defaults to x).

    Returns ``(loss, param_grads, input_grads)``. Parameter gradients are
    for the batch mean; input gradients are per sample (gradient of each
    sample's own distortion), including the direct dependence through the
    target when the target is the input itself.
    """
    x = as_tensor(x)
    xb = x[None, :] if x.ndim == 1 else x
    tb = xb if target is None else as_tensor(target).reshape(xb.shape)
    xhat, cache = forward_pass(model, xb, stage)
    err = tb - xhat
    per_sample = np.sum(err * err, axis=1)
    batch = xb.shape[0]
    grads, gx = backward_pass(model, cache, -2.0 * err)
    grads = [gp / batch for gp in grads]
    if target is None:
        gx = gx + 2.0 * err
    loss = float(np.mean(per_sample))
    return loss, grads, (gx[0] if x.ndim == 1 else gx)


def encode_latent(model: Compressor, x) -> np.ndarray:
    z, _ = forward(model.encoder, as_tensor(x))
    return z


def compress(model: Compressor, x, stage=None) -> np.ndarray:
    """Quantizer indices for ``x`` (one row per sample)."""
    model.check_stage(stage)
    x = as_tensor(x)
    if x.shape[-1] != model.n:
        raise DimensionError(f"input width {x.shape[-1]} != model width {model.n}")
    z = encode_latent(model, x)
    _, idx = qz.hard_quantize(z[..., :model.latent_width(stage)], model.codebook)
    return idx


def decompress(model: Compressor, indices, stage=None) -> np.ndarray:
    model.check_stage(stage)
    idx = np.asarray(indices)
    if idx.shape[-1] != model.latent_width(stage):
        raise DimensionError(
            f"got {idx.shape[-1]} indices, stage {stage!r} needs {model.latent_width(stage)}")
    if idx.size and (idx.min() < 0 or idx.max() >= model.codebook.size):
        raise DimensionError("index outside codebook range")
    xhat, _ = forward(model.decoders[stage], model.codebook.centers[idx])
    return xhat


def reconstruct(model: Compressor, x, stage=None) -> np.ndarray:
    return decompress(model, compress(model, x, stage), stage)


def distortion(model: Compressor, batch, stage=None) -> float:
    """Mean squared-error distortion ``E ||x - xhat||^2`` over the batch."""
    batch = as_tensor(batch)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.shape[0] == 0:
        raise DimensionError("empty batch")
    err = batch - reconstruct(model, batch, stage)
    return float(np.mean(np.sum(err * err, axis=1)))


def train_structured(model: StructuredCompressor, data, cfg):
    """Alternate between the two decoders, each batch picking one with
    probability 1/2. Stage 1 minimizes the plain distortion; stage 2 runs the
    robust inner ascent first. Returns a :class:`~robustcodec.training.TrainResult`.
    """
    from .dro import inner_max
    from .training import train_loop

    if not isinstance(model, StructuredCompressor):
        raise UsageError("train_structured needs a StructuredCompressor")

    def choose(rng):
        return 1 if rng.random() < 0.5 else 2

    def perturb(m, xb, stage, rng):
        if stage == 1:
            return xb
        return inner_max(m, xb, cfg, stage=2)

    return train_loop(model, data, cfg, perturb=perturb, choose_stage=choose)
