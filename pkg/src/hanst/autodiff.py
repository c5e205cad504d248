"""Reverse-mode automatic differentiation over numpy arrays.

Operations executed inside a ``Tape`` context append their result nodes in
execution order, which is by construction a topological order of the
computation graph. ``backward`` walks that list once in reverse, so no
recursion is needed even for long recurrent chains. Outside of a tape,
operations just compute values (inference mode).

All values are 64-bit floats.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateInputError,
    NonFiniteGradientError,
    NonScalarLossError,
    ShapeMismatchError,
)

DTYPE = np.float64

_tape_stack: list["Tape"] = []


class Tensor:
    """A dense n-dimensional value with an optional gradient slot.

    ``parents`` / ``backward_fn`` / ``tape`` are populated only when the
    tensor was produced by an op recorded on an active tape.
    """

    __slots__ = ("values", "grad", "name", "parents", "backward_fn", "tape")

    def __init__(self, values, name: str | None = None):
        self.values = np.asarray(values, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.name = name
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn = None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"{type(self).__name__}(shape={self.shape}{tag})"


class Parameter(Tensor):
    """A trainable leaf tensor."""


class Tape:
    """Wengert list: result nodes in execution (= topological) order."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack.pop()
        assert popped is self
        return False


def _active_tape() -> Tape | None:
    return _tape_stack[-1] if _tape_stack else None


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def _record(values: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(values)
    tape = _active_tape()
    if tape is not None:
        out.parents = parents
        out.backward_fn = backward_fn
        out.tape = tape
        tape.nodes.append(out)
    return out


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tensor that contributed to ``loss``.

    Tensors off the path keep ``grad is None``. Each tape node is visited
    exactly once.
    """
    if loss.values.ndim != 0:
        raise NonScalarLossError(f"loss must be scalar, got shape {loss.shape}")
    if loss.tape is None:
        raise ConfigurationError("loss was not recorded on a tape; run the forward pass inside `with Tape():`")
    loss.grad = np.ones((), dtype=DTYPE)
    for node in reversed(loss.tape.nodes):
        if node.grad is None or node.backward_fn is None:
            continue
        node.backward_fn(node.grad)


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    values = a.values @ b.values

    def bwd(g):
        _accum(a, g @ b.values.T)
        _accum(b, a.values.T @ g)

    return _record(values, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a 1-D bias broadcast over the last axis."""
    if a.shape == b.shape:
        def bwd(g):
            _accum(a, g)
            _accum(b, g)
    elif b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        def bwd(g):
            _accum(a, g)
            _accum(b, g.reshape(-1, b.shape[0]).sum(axis=0))
    else:
        raise ShapeMismatchError(f"add: incompatible shapes {a.shape} + {b.shape}")
    return _record(a.values + b.values, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"sub: incompatible shapes {a.shape} - {b.shape}")

    def bwd(g):
        _accum(a, g)
        _accum(b, -g)

    return _record(a.values - b.values, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"mul: incompatible shapes {a.shape} * {b.shape}")

    def bwd(g):
        _accum(a, g * b.values)
        _accum(b, g * a.values)

    return _record(a.values * b.values, (a, b), bwd)


def add_const(a: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=DTYPE)
    values = a.values + c
    if values.shape != a.shape:
        raise ShapeMismatchError(f"add_const: constant {c.shape} broadcasts {a.shape} to {values.shape}")
    return _record(values, (a,), lambda g: _accum(a, g))


def mul_const(a: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=DTYPE)
    values = a.values * c
    if values.shape != a.shape:
        raise ShapeMismatchError(f"mul_const: constant {c.shape} broadcasts {a.shape} to {values.shape}")
    return _record(values, (a,), lambda g: _accum(a, g * c))


def neg(a: Tensor) -> Tensor:
    return _record(-a.values, (a,), lambda g: _accum(a, -g))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.values)
    return _record(t, (a,), lambda g: _accum(a, g * (1.0 - t * t)))


def sigmoid(a: Tensor) -> Tensor:
    # numerically safe logistic: exp only ever sees non-positive arguments
    x = a.values
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _record(s, (a,), lambda g: _accum(a, g * s * (1.0 - s)))


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0
    return _record(np.where(mask, a.values, 0.0), (a,), lambda g: _accum(a, g * mask))


def abs_(a: Tensor) -> Tensor:
    sign = np.sign(a.values)
    return _record(np.abs(a.values), (a,), lambda g: _accum(a, g * sign))


def softmax(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Masked softmax over the last axis, stabilized by max-subtraction.

    Masked positions come out exactly 0 and receive exactly zero gradient.
    Every row must have at least one unmasked position.
    """
    x = a.values
    if mask is None:
        m = np.ones(x.shape, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != x.shape:
            raise ShapeMismatchError(f"softmax: mask shape {m.shape} != input shape {x.shape}")
    if not m.any(axis=-1).all():
        raise DegenerateInputError("softmax: some row has all positions masked")
    shifted = np.where(m, x, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(m, np.exp(shifted), 0.0)
    p = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (p * g).sum(axis=-1, keepdims=True)
        _accum(a, p * (g - inner))

    return _record(p, (a,), bwd)


def dropout(a: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p); identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ConfigurationError("dropout in training mode requires a seeded rng")
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return _record(a.values * keep, (a,), lambda g: _accum(a, g * keep))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    return _record(a.values.reshape(shape), (a,), lambda g: _accum(a, g.reshape(old)))


def concat(parts: list[Tensor], axis: int) -> Tensor:
    values = np.concatenate([t.values for t in parts], axis=axis)
    sizes = [t.shape[axis] for t in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            key = [slice(None)] * g.ndim
            key[axis] = slice(lo, hi)
            _accum(t, g[tuple(key)])

    return _record(values, tuple(parts), bwd)


def stack(parts: list[Tensor], axis: int) -> Tensor:
    values = np.stack([t.values for t in parts], axis=axis)

    def bwd(g):
        for i, t in enumerate(parts):
            _accum(t, np.take(g, i, axis=axis))

    return _record(values, tuple(parts), bwd)


def index_axis(a: Tensor, idx: int, axis: int) -> Tensor:
    """Select one slice along ``axis`` (the axis is dropped)."""
    values = np.take(a.values, idx, axis=axis)

    def bwd(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.values)
        key = [slice(None)] * a.ndim
        key[axis] = idx
        a.grad[tuple(key)] += g

    return _record(values, (a,), bwd)


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice along the last axis."""
    values = a.values[..., start:stop]

    def bwd(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.values)
        a.grad[..., start:stop] += g

    return _record(values, (a,), bwd)


def sum_axis(a: Tensor, axis: int) -> Tensor:
    values = a.values.sum(axis=axis)

    def bwd(g):
        _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _record(values, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    return _record(a.values.sum(), (a,), lambda g: _accum(a, np.broadcast_to(g, a.shape)))


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    return _record(a.values.mean(), (a,), lambda g: _accum(a, np.broadcast_to(g / n, a.shape)))


def rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table; ids may have any shape."""
    ids = np.asarray(ids)
    values = table.values[ids]

    def bwd(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.values)
        np.add.at(table.grad, ids, g)

    return _record(values, (table,), bwd)


def weighted_sum(h: Tensor, alpha: Tensor) -> Tensor:
    """Attention pooling: h [B,T,D] weighted by alpha [B,T] -> [B,D]."""
    if h.ndim != 3 or alpha.shape != h.shape[:2]:
        raise ShapeMismatchError(f"weighted_sum: states {h.shape} vs weights {alpha.shape}")
    values = np.einsum("btd,bt->bd", h.values, alpha.values)

    def bwd(g):
        _accum(h, alpha.values[:, :, None] * g[:, None, :])
        _accum(alpha, np.einsum("btd,bd->bt", h.values, g))

    return _record(values, (h, alpha), bwd)


def cross_entropy(logits: Tensor, golds: np.ndarray) -> Tensor:
    """Mean negative log softmax-probability of the gold class."""
    golds = np.asarray(golds, dtype=np.int64)
    if logits.ndim != 2 or golds.shape != (logits.shape[0],):
        raise ShapeMismatchError(f"cross_entropy: logits {logits.shape} vs golds {golds.shape}")
    if golds.size == 0:
        raise DegenerateInputError("cross_entropy: empty batch")
    x = logits.values
    shifted = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    n = golds.shape[0]
    loss = -logp[np.arange(n), golds].mean()

    def bwd(g):
        grad = np.exp(logp)
        grad[np.arange(n), golds] -= 1.0
        _accum(logits, g * grad / n)

    return _record(loss, (logits,), bwd)


# ---------------------------------------------------------------------------
# initializers
# ---------------------------------------------------------------------------

def xavier_init(shape, variant: str, rng: np.random.Generator) -> np.ndarray:
    """Glorot initialization for a 2-D weight matrix.

    uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out))
    normal:  N(0, 2 / (fan_in + fan_out))
    """
    shape = tuple(shape)
    if len(shape) != 2:
        raise ConfigurationError(f"xavier_init expects a 2-D shape, got {shape}")
    fan_sum = shape[0] + shape[1]
    if variant == "uniform":
        a = np.sqrt(6.0 / fan_sum)
        return rng.uniform(-a, a, size=shape).astype(DTYPE)
    if variant == "normal":
        return rng.normal(0.0, np.sqrt(2.0 / fan_sum), size=shape).astype(DTYPE)
    raise ConfigurationError(f"unknown xavier variant {variant!r}")


def zeros_init(shape) -> np.ndarray:
    return np.zeros(shape, dtype=DTYPE)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction; state lives per parameter name.

    Parameters whose grad is None this step are skipped, so an update with
    all-zero gradients leaves parameters bit-identical (fixed point).
    """

    def __init__(self, params: dict[str, Parameter], lr: float = 0.005,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8,
                 clip_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.clip_norm = clip_norm
        self.step_count = 0
        self.m = {name: np.zeros_like(p.values) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.values) for name, p in params.items()}

    def step(self) -> None:
        self.step_count += 1
        grads = {}
        for name, p in self.params.items():
            if p.grad is None:
                continue
            if not np.isfinite(p.grad).all():
                raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
            grads[name] = p.grad
        if self.clip_norm is not None and grads:
            total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if total > self.clip_norm:
                scale = self.clip_norm / total
                grads = {name: g * scale for name, g in grads.items()}
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)
            self.params[name].values -= self.lr * update

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
