"""Dense float64 tensors with a reverse-mode gradient tape, plus Adam.

Operations executed while a :class:`Tape` is active, and which touch at least
one tensor with ``requires_grad=True``, are appended to that tape together with
a backward rule. :func:`backward` replays the rules in reverse order.
Outside a tape the same operations run as plain numpy arithmetic, which is the
evaluation path.

Arrays may carry leading batch axes: ``matmul`` follows ``np.matmul`` and
elementwise ops follow numpy broadcasting, with gradients summed back onto the
operand shapes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import DimensionError, InvalidArgumentError

LAYER_NORM_EPS = 1e-5

_tape_ids = itertools.count(1)
_active_tapes: list["Tape"] = []


class Tensor:
    """A float64 array that can take part in a gradient tape.

    Parameters
    ----------
    data : array_like
        Values; converted to a C-contiguous float64 array (no copy if it already is one).
    requires_grad : bool
        Mark the tensor as a leaf whose gradient should be tracked.
    name : str, optional
        Used in error messages and checkpoints.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Record:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str = ""


@dataclass
class Tape:
    """Ordered log of differentiable operations.

    Use as a context manager; operations run inside the ``with`` block are
    recorded in execution order, which is already a topological order.
    """

    records: list[Record] = field(default_factory=list)
    tape_id: int = field(default_factory=lambda: next(_tape_ids))

    def __enter__(self):
        _active_tapes.append(self)
        return self

    def __exit__(self, *exc):
        _active_tapes.remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def record(self, op, inputs, output, backward_fn):
        output.requires_grad = True
        output.tape_id = self.tape_id
        self.records.append(Record(tuple(inputs), output, backward_fn, op))

    def backward(self, loss, leaves=None):
        return backward(self, loss, leaves)


def _current_tape() -> Tape | None:
    return _active_tapes[-1] if _active_tapes else None


def _emit(op, inputs, out_data, backward_fn) -> Tensor:
    out = Tensor(out_data)
    tape = _current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(op, inputs, out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_same_shape(op, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product ``a @ b``; leading axes broadcast like ``np.matmul``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}") from None
    ad, bd = a.data, b.data

    def back(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape) if b.requires_grad else None
        return ga, gb

    return _emit("matmul", (a, b), out, back)


# --------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", (a, b), a.data + b.data,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", (a, b), a.data - b.data,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit("mul", (a, b), ad * bd,
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _emit("relu", (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return _emit("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def square(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _emit("square", (x,), xd * xd, lambda g: (2.0 * xd * g,))


def dropout(x, p: float, rng=None, train: bool = True) -> Tensor:
    """Inverted dropout: zero with probability ``p``, rescale survivors by 1/(1-p).

    ``rng`` is a ``numpy.random.Generator`` or an integer seed. In eval mode
    (``train=False``) the input is returned untouched and no randomness is drawn.
    """
    if not 0.0 <= p < 1.0:
        raise InvalidArgumentError(f"dropout probability must lie in [0, 1), got {p}")
    x = as_tensor(x)
    if not train or p == 0.0:
        return x
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    scale = (rng.random(x.shape) >= p) / (1.0 - p)
    return _emit("dropout", (x,), x.data * scale, lambda g: (g * scale,))


def elementwise(op: str, *inputs, **kwargs) -> Tensor:
    """Dispatch by name: relu, sigmoid, mul, add, dropout."""
    table = {"relu": relu, "sigmoid": sigmoid, "mul": mul, "add": add, "dropout": dropout}
    if op not in table:
        raise InvalidArgumentError(f"unknown elementwise op {op!r}")
    return table[op](*inputs, **kwargs)


# --------------------------------------------------------------------------
# shape and reductions


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {src} as {tuple(shape)}") from None
    return _emit("reshape", (x,), out, lambda g: (g.reshape(src),))


def swapaxes(x, a: int, b: int) -> Tensor:
    x = as_tensor(x)
    return _emit("swapaxes", (x,), np.swapaxes(x.data, a, b).copy(),
                 lambda g: (np.swapaxes(g, a, b),))


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _emit("sum", (x,), np.asarray(x.data.sum()),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    shape, n = x.shape, x.size
    return _emit("mean", (x,), np.asarray(x.data.mean()),
                 lambda g: (np.full(shape, g.reshape(()) / n),))


# --------------------------------------------------------------------------
# layers


def causal_conv1d(x, w, b, dilation: int = 1) -> Tensor:
    """Causal dilated convolution along the last axis.

    ``out[..., t] = sum_k w[k] * x[..., t - k*dilation] + b`` with zeros for
    negative time indices, so the output keeps the input length and position
    ``t`` never sees inputs after ``t``. ``w`` has shape ``(K,)`` and ``b`` is a
    scalar tensor.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if w.ndim != 1 or w.shape[0] == 0:
        raise InvalidArgumentError(f"causal_conv1d: kernel must be a non-empty vector, got {w.shape}")
    if int(dilation) != dilation or dilation < 1:
        raise InvalidArgumentError(f"causal_conv1d: dilation must be a positive integer, got {dilation}")
    if b.size != 1:
        raise DimensionError(f"causal_conv1d: bias must be scalar, got shape {b.shape}")
    dilation = int(dilation)
    K, L = w.shape[0], x.shape[-1]
    pad = (K - 1) * dilation
    xp = np.concatenate([np.zeros(x.shape[:-1] + (pad,)), x.data], axis=-1)
    offsets = [pad - k * dilation for k in range(K)]
    wd = w.data
    out = np.full(x.shape, float(b.data.reshape(-1)[0]))
    for k, off in enumerate(offsets):
        out += wd[k] * xp[..., off:off + L]

    def back(g):
        gx = gw = None
        if x.requires_grad:
            gxp = np.zeros(xp.shape)
            for k, off in enumerate(offsets):
                gxp[..., off:off + L] += wd[k] * g
            gx = gxp[..., pad:]
        if w.requires_grad:
            gw = np.array([np.sum(g * xp[..., off:off + L]) for off in offsets])
        gb = np.asarray(g.sum()).reshape(b.shape) if b.requires_grad else None
        return gx, gw, gb

    return _emit("causal_conv1d", (x, w, b), out, back)


def layer_norm(x, gamma, beta, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize over the last axis to zero mean and unit variance, then apply
    ``gamma * xhat + beta``. The variance is floored by ``eps``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    n = x.shape[-1] if x.ndim else 0
    if n == 0:
        raise InvalidArgumentError("layer_norm: normalized axis has length 0")
    if gamma.shape != (n,) or beta.shape != (n,):
        raise DimensionError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} do not match axis length {n}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gamma.data
    out = xhat * gd + beta.data

    def back(g):
        gx = ggamma = gbeta = None
        if x.requires_grad:
            gh = g * gd
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        if gamma.requires_grad:
            ggamma = _unbroadcast(g * xhat, gamma.shape)
        if beta.requires_grad:
            gbeta = _unbroadcast(g, beta.shape)
        return gx, ggamma, gbeta

    return _emit("layer_norm", (x, gamma, beta), out, back)


# --------------------------------------------------------------------------
# reverse pass


def backward(tape: Tape, loss: Tensor, leaves: Sequence[Tensor] | None = None) -> list[np.ndarray]:
    """Propagate d(loss) back through ``tape``.

    Every tensor in ``leaves`` gets its ``grad`` set to the total derivative of
    ``loss``; leaves the loss does not depend on get zeros. When ``leaves`` is
    omitted, all leaf tensors referenced by the tape are used. Returns the
    gradients in the order of ``leaves``.
    """
    if loss.size != 1:
        raise InvalidArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")
    if leaves is None:
        produced = {id(r.output) for r in tape.records}
        seen, leaves = set(), []
        for r in tape.records:
            for t in r.inputs:
                if t.requires_grad and id(t) not in produced and id(t) not in seen:
                    seen.add(id(t))
                    leaves.append(t)

    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for t, gi in zip(rec.inputs, rec.backward_fn(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.array(gi, dtype=np.float64)

    out = []
    for leaf in leaves:
        g = grads.get(id(leaf))
        leaf.grad = np.zeros(leaf.shape) if g is None else g.reshape(leaf.shape)
        out.append(leaf.grad)
    return out


# --------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "AdamState":
        return cls(m=[np.zeros(p.shape) for p in params],
                   v=[np.zeros(p.shape) for p in params], **hyper)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise DimensionError(
            f"adam_step: {len(params)} params, {len(grads)} grads, {len(state.m)} moment buffers")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise DimensionError(f"adam_step: param {p.shape}, grad {np.shape(g)}, state {m.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state
