"""The soft-sensor network.

Data flow for one window ``X`` (D sensors x W timesteps)::

    mixer blocks      D x W  -> D x W   (time mixing per row, feature mixing per column)
    width lift        D x W  -> D x C   (shared linear map per node)
    ST blocks         D x C  -> D x C   (gated causal conv per node, then hypergraph conv)
    readout           D*C    -> 1       (two-layer MLP)

All functions accept a leading batch axis.
"""

from __future__ import annotations

import dataclasses
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .exceptions import CheckpointFormatError, DimensionError, InvalidArgumentError
from .tensor import (Tensor, add, as_tensor, causal_conv1d, dropout, layer_norm, matmul, mul,
                     relu, reshape, sigmoid, swapaxes)

CHECKPOINT_MAGIC = "STHCSS1"


@dataclass(frozen=True)
class ModelConfig:
    D: int
    W: int = 85
    mixer_blocks: int = 2
    kernel_size: int = 7
    dilation: int = 1
    st_blocks: int = 2
    channels: int = 16
    dropout_p: float = 0.2
    readout_hidden: int = 64

    def __post_init__(self):
        for name in ("D", "W", "mixer_blocks", "kernel_size", "dilation", "st_blocks",
                     "channels", "readout_hidden"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {v}")
        if self.kernel_size > self.W:
            raise InvalidArgumentError(f"kernel_size {self.kernel_size} exceeds window {self.W}")
        if self.kernel_size > self.channels:
            raise InvalidArgumentError(
                f"kernel_size {self.kernel_size} exceeds channels {self.channels}, "
                "the sequence length seen by the gated convolution")
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidArgumentError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for key, val in d.items():
            if key not in kinds:
                raise InvalidArgumentError(f"unknown model config key {key!r}")
            kw[key] = float(val) if key == "dropout_p" else int(val)
        return cls(**kw)


class ModelParams(OrderedDict):
    """Name -> leaf :class:`Tensor`, in registration order."""

    def register(self, name, data):
        if name in self:
            raise KeyError(f"parameter {name!r} registered twice")
        self[name] = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        return self[name]

    def flat(self) -> list[Tensor]:
        return list(self.values())

    def block(self, prefix: str) -> dict:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.items() if k.startswith(prefix + ".")}

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.items()}

    def load_values(self, values: dict[str, np.ndarray]):
        for k, v in self.items():
            v.data[...] = values[k]

    def n_values(self) -> int:
        return sum(p.size for p in self.values())


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...], int | None]]:
    """(name, shape, fan_in) for every parameter. ``fan_in=None`` marks a
    LayerNorm scale (init 1) and ``0`` a LayerNorm shift (init 0)."""
    D, W, C, K, Hd = cfg.D, cfg.W, cfg.channels, cfg.kernel_size, cfg.readout_hidden
    out = []
    for i in range(cfg.mixer_blocks):
        p = f"mixer{i}"
        out += [
            (f"{p}.time_norm.gamma", (W,), None),
            (f"{p}.time_norm.beta", (W,), 0),
            (f"{p}.time.weight", (W, W), W),
            (f"{p}.time.bias", (W,), W),
            (f"{p}.feat_norm.gamma", (D,), None),
            (f"{p}.feat_norm.beta", (D,), 0),
            (f"{p}.feat1.weight", (D, D), D),
            (f"{p}.feat1.bias", (D,), D),
            (f"{p}.feat2.weight", (D, D), D),
            (f"{p}.feat2.bias", (D,), D),
        ]
    out += [("lift.weight", (W, C), W), ("lift.bias", (C,), W)]
    for i in range(cfg.st_blocks):
        p = f"st{i}"
        out += [
            (f"{p}.filter.weight", (K,), K),
            (f"{p}.filter.bias", (1,), K),
            (f"{p}.gate.weight", (K,), K),
            (f"{p}.gate.bias", (1,), K),
            (f"{p}.theta", (C, C), C),
        ]
    out += [
        ("readout.hidden.weight", (D * C, Hd), D * C),
        ("readout.hidden.bias", (Hd,), D * C),
        ("readout.out.weight", (Hd, 1), Hd),
        ("readout.out.bias", (1,), Hd),
    ]
    return out


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Uniform(-a, a) with ``a = sqrt(1 / fan_in)``; LayerNorm affines start at (1, 0)."""
    rng = np.random.default_rng(seed)
    params = ModelParams()
    for name, shape, fan_in in param_shapes(cfg):
        if fan_in is None:
            data = np.ones(shape)
        elif fan_in == 0:
            data = np.zeros(shape)
        else:
            a = math.sqrt(1.0 / fan_in)
            data = rng.uniform(-a, a, size=shape)
        params.register(name, data)
    return params


def zero_params(cfg: ModelConfig) -> ModelParams:
    params = ModelParams()
    for name, shape, _ in param_shapes(cfg):
        params.register(name, np.zeros(shape))
    return params


# --------------------------------------------------------------------------
# blocks


def _check_window(x: Tensor, D: int | None, W: int | None, what: str):
    if x.ndim not in (2, 3):
        raise DimensionError(f"{what}: expected D x W or B x D x W input, got {x.shape}")
    if (D is not None and x.shape[-2] != D) or (W is not None and x.shape[-1] != W):
        raise DimensionError(f"{what}: expected trailing shape ({D}, {W}), got {x.shape}")


def mixer_forward(x, p: dict) -> Tensor:
    """One mixer block.

    Time mixing: each sensor row is layer-normalized over time and passed
    through a W x W perceptron with ReLU, added back to the input. Feature
    mixing: each timestep column is layer-normalized over sensors and passed
    through a two-layer D -> D -> D perceptron, added back.
    """
    x = as_tensor(x)
    W = p["time.weight"].shape[0]
    D = p["feat1.weight"].shape[0]
    _check_window(x, D, W, "mixer")
    h = layer_norm(x, p["time_norm.gamma"], p["time_norm.beta"])
    u = add(x, relu(add(matmul(h, p["time.weight"]), p["time.bias"])))

    ut = swapaxes(u, -1, -2)  # ... x W x D
    h = layer_norm(ut, p["feat_norm.gamma"], p["feat_norm.beta"])
    h = relu(add(matmul(h, p["feat1.weight"]), p["feat1.bias"]))
    h = add(matmul(h, p["feat2.weight"]), p["feat2.bias"])
    return swapaxes(add(ut, h), -1, -2)


def gtc_forward(x, w_f, b_f, w_g, b_g, dilation: int = 1) -> Tensor:
    """Gated causal convolution along the last axis of each row:
    ``conv(x, w_f) * sigmoid(conv(x, w_g))``."""
    x = as_tensor(x)
    K = as_tensor(w_f).shape[0]
    if K > x.shape[-1]:
        raise InvalidArgumentError(f"kernel size {K} exceeds sequence length {x.shape[-1]}")
    filt = causal_conv1d(x, w_f, b_f, dilation)
    gate = sigmoid(causal_conv1d(x, w_g, b_g, dilation))
    return mul(filt, gate)


def hgconv_forward(x, N, theta) -> Tensor:
    """Hypergraph convolution ``relu(N @ X @ Theta)`` for node features X (D x C)."""
    x, N, theta = as_tensor(x), as_tensor(N), as_tensor(theta)
    D = x.shape[-2]
    if N.shape != (D, D):
        raise DimensionError(f"hgconv: adjacency {N.shape} does not match {D} nodes")
    if theta.ndim != 2 or theta.shape[0] != x.shape[-1]:
        raise DimensionError(f"hgconv: theta {theta.shape} does not match feature width {x.shape[-1]}")
    return relu(matmul(matmul(N, x), theta))


def encode(x, N, params: ModelParams, cfg: ModelConfig, train: bool = False, rng=None) -> Tensor:
    """Everything before the readout: returns ``(..., D, channels)`` node features."""
    x = as_tensor(x)
    _check_window(x, cfg.D, cfg.W, "model input")
    p_drop = cfg.dropout_p if train else 0.0
    if train and p_drop > 0 and not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    h = x
    for i in range(cfg.mixer_blocks):
        try:
            h = mixer_forward(h, params.block(f"mixer{i}"))
        except (DimensionError, InvalidArgumentError) as exc:
            raise type(exc)(f"mixer block {i}: {exc}") from exc
        h = dropout(h, p_drop, rng, train)
    h = add(matmul(h, params["lift.weight"]), params["lift.bias"])
    for i in range(cfg.st_blocks):
        p = params.block(f"st{i}")
        try:
            h = gtc_forward(h, p["filter.weight"], p["filter.bias"],
                            p["gate.weight"], p["gate.bias"], cfg.dilation)
            h = hgconv_forward(h, N, p["theta"])
        except (DimensionError, InvalidArgumentError) as exc:
            raise type(exc)(f"st block {i}: {exc}") from exc
        h = dropout(h, p_drop, rng, train)
    return h


def readout(h: Tensor, params: ModelParams) -> Tensor:
    lead = h.shape[:-2]
    flat = reshape(h, lead + (1, h.shape[-2] * h.shape[-1]))
    z = relu(add(matmul(flat, params["readout.hidden.weight"]), params["readout.hidden.bias"]))
    y = add(matmul(z, params["readout.out.weight"]), params["readout.out.bias"])
    return reshape(y, lead)


def forward(x, N, params: ModelParams, cfg: ModelConfig, train: bool = False, rng=None) -> Tensor:
    """Predict the (standardized) target for one window or a batch of windows.

    Returns a 0-d tensor for a single ``D x W`` window, shape ``(B,)`` for a batch.
    """
    return readout(encode(x, N, params, cfg, train=train, rng=rng), params)


def predict(X, N, params: ModelParams, cfg: ModelConfig, batch_size: int = 256) -> np.ndarray:
    """Eval-mode predictions for an array of windows ``(n, D, W)``."""
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], batch_size):
        out[s:s + batch_size] = forward(X[s:s + batch_size], N, params, cfg).data
    return out


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, cfg: ModelConfig, params: ModelParams,
                    buffers: dict[str, np.ndarray] | None = None,
                    meta: dict[str, object] | None = None) -> None:
    """Text checkpoint: magic line, ``key=value`` header, then one record per
    array (``param|buffer name dims`` line followed by a line of values).
    Values are written with 17 significant digits, so they round-trip exactly."""
    lines = [CHECKPOINT_MAGIC]
    lines += [f"config.{k}={v!r}" if isinstance(v, float) else f"config.{k}={v}"
              for k, v in cfg.to_dict().items()]
    for k, v in (meta or {}).items():
        lines.append(f"meta.{k}={v}")
    lines.append("end")
    records = [("param", k, v.data) for k, v in params.items()]
    records += [("buffer", k, np.asarray(v, dtype=np.float64)) for k, v in (buffers or {}).items()]
    for kind, name, arr in records:
        dims = "x".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"{kind} {name} {dims}")
        lines.append(" ".join(f"{v:.17g}" for v in arr.reshape(-1)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`: ``(cfg, params, buffers, meta)``."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic, expected {CHECKPOINT_MAGIC!r}")
    try:
        end = lines.index("end")
    except ValueError:
        raise CheckpointFormatError(f"{path}: header not terminated") from None
    conf, meta = {}, {}
    for line in lines[1:end]:
        key, sep, val = line.partition("=")
        if not sep:
            raise CheckpointFormatError(f"{path}: malformed header line {line!r}")
        if key.startswith("config."):
            conf[key[7:]] = val
        elif key.startswith("meta."):
            meta[key[5:]] = val
    try:
        cfg = ModelConfig.from_dict(conf)
    except (TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: invalid model config: {exc}") from exc

    arrays: dict[str, tuple[str, np.ndarray]] = {}
    body = [ln for ln in lines[end + 1:]]
    i = 0
    try:
        while i < len(body):
            if not body[i]:
                i += 1
                continue
            kind, name, dims = body[i].split(" ")
            shape = () if dims == "scalar" else tuple(int(d) for d in dims.split("x"))
            values = np.array([float(v) for v in body[i + 1].split()], dtype=np.float64)
            arrays[name] = (kind, values.reshape(shape))
            i += 2
    except (ValueError, IndexError) as exc:
        raise CheckpointFormatError(f"{path}: corrupt record near line {end + 2 + i}: {exc}") from exc

    params = ModelParams()
    for name, shape, _ in param_shapes(cfg):
        if name not in arrays or arrays[name][0] != "param" or arrays[name][1].shape != shape:
            raise CheckpointFormatError(f"{path}: missing or misshapen parameter {name!r}")
        params.register(name, arrays[name][1])
    buffers = {k: v for k, (kind, v) in arrays.items() if kind == "buffer"}
    return cfg, params, buffers, meta
