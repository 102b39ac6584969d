"""Small real- and complex-valued classifiers over complex image inputs.

Both kinds expose the same differentiable surface: complex input batch
(batch, channels, H, W) -> real logits (batch, classes). The complex-valued
network (cvnn) runs complex conv and dense layers with split-ReLU and reads
out real features through a per-element magnitude before the final real
affine layer. The real-valued network (rvnn) first encodes the complex
input as real channels (re/im stacking by default, magnitude/phase as an
alternative) and is real-parameterized throughout.

Checkpoints are versioned binary: magic "CVAK", u32 version, a JSON config
blob, then each parameter tensor as little-endian float64 interleaved
re/im. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from ._seeding import subseed

_MAGIC = b"CVAK"
_VERSION = 1

KINDS = ("rvnn", "cvnn")
ENCODINGS = ("reim", "magphase")


class ConfigError(ValueError):
    """A model configuration violates its invariants."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed."""


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "cvnn"
    input_shape: tuple = (1, 8, 8)
    hidden_widths: tuple = (12, 12, 48)
    conv_stages: int = 2
    classes: int = 3
    seed: int = 0
    encoding: str = "reim"  # rvnn input encoding
    input_gain: float = 1.0  # fixed input scaling, part of the architecture
    # soft unit-normalization scale s of the input layer z -> z/(|z| + s);
    # 0 disables. Makes phase the dominant feature across wide magnitude
    # ranges, the usual regime for coherent imagery
    input_norm: float = 0.0

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"encoding must be one of {ENCODINGS}")
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise ConfigError(f"bad input shape {self.input_shape}")
        if self.classes < 2:
            raise ConfigError("classes must be >= 2")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ConfigError("hidden widths must all be >= 1")
        if not 0 <= self.conv_stages <= len(self.hidden_widths):
            raise ConfigError("conv_stages must be within hidden_widths")
        if not np.isfinite(self.input_gain) or self.input_gain <= 0:
            raise ConfigError("input_gain must be positive")
        if not np.isfinite(self.input_norm) or self.input_norm < 0:
            raise ConfigError("input_norm must be >= 0")


def _layer_plan(config: ModelConfig):
    """(name, fan_in, fan_out, is_complex, is_conv) for every layer."""
    ch_in, height, width = config.input_shape
    channels = ch_in if config.kind == "cvnn" else 2 * ch_in
    complex_params = config.kind == "cvnn"
    plan = []
    for i, w in enumerate(config.hidden_widths[: config.conv_stages]):
        plan.append((f"conv{i}", channels, w, complex_params, True))
        channels = w
    features = channels * height * width
    for i, w in enumerate(config.hidden_widths[config.conv_stages :]):
        plan.append((f"dense{i}", features, w, complex_params, False))
        features = w
    plan.append(("head", features, config.classes, False, False))
    return plan


class Model:
    """A built classifier: immutable config plus mutable parameter arrays."""

    def __init__(self, config: ModelConfig, params, param_real):
        self.config = config
        self.params = params  # list of complex128 arrays
        self.param_real = param_real  # True where the parameter is real-valued
        self.loss_kind = "cross_entropy"

    def param_leaves(self):
        return [ad.CTensor(p, real_only=r) for p, r in zip(self.params, self.param_real)]

    def num_real_parameters(self):
        return sum(p.size * (1 if r else 2) for p, r in zip(self.params, self.param_real))

    def _logits_node(self, x, leaves):
        cfg = self.config
        if x.ndim != 4 or x.shape[1:] != tuple(cfg.input_shape):
            raise ad.ShapeError(
                f"model input shape {x.shape} does not match config {cfg.input_shape}"
            )
        h = x
        if cfg.input_norm > 0:
            h = ad.soft_normalize(h, cfg.input_norm)
        if cfg.input_gain != 1.0:
            h = ad.scale(h, cfg.input_gain)
        if cfg.kind == "rvnn":
            if cfg.encoding == "reim":
                h = ad.concat([ad.real_part(h), ad.imag_part(h)], axis=1)
            else:
                h = ad.concat([ad.magnitude(h), ad.phase(h)], axis=1)
        k = 0
        for _ in range(cfg.conv_stages):
            h = ad.split_relu(ad.conv2d(h, leaves[k], leaves[k + 1]))
            k += 2
        h = ad.reshape(h, (x.shape[0], -1))
        for _ in cfg.hidden_widths[cfg.conv_stages :]:
            h = ad.split_relu(ad.add(ad.matmul(h, leaves[k]), leaves[k + 1]))
            k += 2
        if cfg.kind == "cvnn":
            h = ad.magnitude(h)
        return ad.add(ad.matmul(h, leaves[k]), leaves[k + 1])

    def logits(self, X):
        x = ad.CTensor(np.asarray(X, dtype=np.complex128))
        return self._logits_node(x, self.param_leaves()).value.real

    def predict(self, X):
        return self.logits(X).argmax(axis=1)

    def accuracy(self, X, Y):
        return float((self.predict(X) == np.asarray(Y)).mean())

    def per_sample_loss(self, X, Y):
        return ad.softmax_nll_values(self.logits(X), Y)

    def loss_and_grad(self, X, Y, reduce="mean"):
        """Cross-entropy and its Wirtinger gradient with respect to X."""
        x = ad.CTensor(np.asarray(X, dtype=np.complex128))
        loss = ad.cross_entropy(self._logits_node(x, self.param_leaves()), Y, reduce=reduce)
        grads = ad.wirtinger_backward(loss, [x])
        return float(loss.value.real), grads[x]


def build_model(config: ModelConfig) -> Model:
    """Deterministic parameters per seed: magnitudes uniform scaled by
    fan-in, phases uniform in [-pi, pi) for complex weights; biases zero."""
    config.validate()
    params = []
    param_real = []
    for i, (_, fan_in, fan_out, is_complex, is_conv) in enumerate(_layer_plan(config)):
        rng = np.random.Generator(np.random.PCG64(subseed(config.seed, "init", i)))
        kcount = fan_in * 9 if is_conv else fan_in
        bound = np.sqrt(6.0 / kcount)
        wshape = (fan_out, fan_in, 3, 3) if is_conv else (fan_in, fan_out)
        if is_complex:
            mags = rng.uniform(0.0, bound, size=wshape)
            phis = rng.uniform(-np.pi, np.pi, size=wshape)
            w = mags * np.exp(1j * phis)
        else:
            w = rng.uniform(-bound, bound, size=wshape).astype(np.complex128)
        params.append(np.ascontiguousarray(w, dtype=np.complex128))
        param_real.append(not is_complex)
        params.append(np.zeros(fan_out, dtype=np.complex128))
        param_real.append(not is_complex)
    return Model(config, params, param_real)


def loss_and_gradient(model: Model, X, Y):
    """Mean cross-entropy and the Wirtinger gradient with respect to X."""
    return model.loss_and_grad(X, Y, reduce="mean")


def _config_to_json(config: ModelConfig) -> bytes:
    d = asdict(config)
    d["input_shape"] = list(d["input_shape"])
    d["hidden_widths"] = list(d["hidden_widths"])
    return json.dumps(d, sort_keys=True).encode("utf-8")


def _config_from_json(blob: bytes) -> ModelConfig:
    d = json.loads(blob.decode("utf-8"))
    d["input_shape"] = tuple(d["input_shape"])
    d["hidden_widths"] = tuple(d["hidden_widths"])
    return ModelConfig(**d)


def save_model(path, model: Model):
    cfg_blob = _config_to_json(model.config)
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<I", _VERSION)
    buf += struct.pack("<I", len(cfg_blob))
    buf += cfg_blob
    buf += struct.pack("<I", len(model.params))
    for p, real in zip(model.params, model.param_real):
        buf += struct.pack("<B", 1 if real else 0)
        buf += struct.pack("<I", p.ndim)
        buf += struct.pack(f"<{p.ndim}I", *p.shape)
        buf += np.ascontiguousarray(p, dtype="<c16").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_model(path) -> Model:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (cfg_len,) = struct.unpack_from("<I", raw, 8)
    offset = 12
    if len(raw) < offset + cfg_len + 4:
        raise CheckpointError(f"{path}: truncated config")
    config = _config_from_json(raw[offset : offset + cfg_len])
    offset += cfg_len
    (nparams,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    params = []
    param_real = []
    for _ in range(nparams):
        if len(raw) < offset + 5:
            raise CheckpointError(f"{path}: truncated parameter header")
        (real_flag,) = struct.unpack_from("<B", raw, offset)
        (rank,) = struct.unpack_from("<I", raw, offset + 1)
        offset += 5
        shape = struct.unpack_from(f"<{rank}I", raw, offset)
        offset += 4 * rank
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        if len(raw) < offset + 16 * count:
            raise CheckpointError(f"{path}: truncated parameter data")
        p = np.frombuffer(raw, dtype="<c16", count=count, offset=offset).reshape(shape)
        offset += 16 * count
        params.append(np.ascontiguousarray(p, dtype=np.complex128))
        param_real.append(bool(real_flag))
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes")
    expected = [p.shape for p in build_model(config).params]
    if [p.shape for p in params] != expected:
        raise CheckpointError(f"{path}: parameter shapes do not match config")
    return Model(config, params, param_real)
