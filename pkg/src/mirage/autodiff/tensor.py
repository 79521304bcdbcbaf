"""Reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps an ndarray; primitives run eagerly and, when a ``Tape`` is
active and any input is grad-tracked, append an entry holding the saved
values needed for the backward pass. ``backward`` replays the tape in reverse
and accumulates gradients into the tracked leaves.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "Tape",
    "AutodiffError",
    "ShapeMismatchError",
    "UnknownPrimitiveError",
    "apply_primitive",
    "backward",
    "constant",
    "parameter",
    "primitive_names",
    "set_finite_checks",
]

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327

# Debug-mode guard: when on, every primitive output is checked for NaN/Inf.
_CHECK_FINITE = False


def set_finite_checks(enabled: bool) -> None:
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


class AutodiffError(Exception):
    pass


class ShapeMismatchError(AutodiffError):
    def __init__(self, primitive: str, detail: str):
        super().__init__(f"{primitive}: shape mismatch ({detail})")
        self.primitive = primitive


class UnknownPrimitiveError(AutodiffError):
    def __init__(self, kind: str):
        super().__init__(f"unknown primitive '{kind}'")
        self.kind = kind


class Tensor:
    """Immutable n-d value; ``grad`` is the only field mutated after creation."""

    __slots__ = ("data", "grad_tracked", "grad")

    def __init__(self, data, grad_tracked: bool = False, dtype=None):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = np.float32
        arr = np.array(data, dtype=dtype, copy=True)
        arr.flags.writeable = False
        self.data = arr
        self.grad_tracked = bool(grad_tracked)
        self.grad = None

    @classmethod
    def _wrap(cls, arr, grad_tracked: bool) -> "Tensor":
        t = cls.__new__(cls)
        arr = np.asarray(arr)
        arr.flags.writeable = False
        t.data = arr
        t.grad_tracked = grad_tracked
        t.grad = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise AutodiffError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Leaf copy that never receives gradient (used by the memory bank)."""
        return Tensor._wrap(self.data, grad_tracked=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, tracked={self.grad_tracked})"

    # Operator sugar; Python scalars become untracked constants of our dtype.
    def __add__(self, other):
        return add(self, _coerce(other, self))

    def __radd__(self, other):
        return add(_coerce(other, self), self)

    def __sub__(self, other):
        return sub(self, _coerce(other, self))

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self))

    def __rmul__(self, other):
        return mul(_coerce(other, self), self)

    def __truediv__(self, other):
        return div(self, _coerce(other, self))

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, grad_tracked=False, dtype=dtype)


def parameter(data, dtype=None) -> Tensor:
    return Tensor(data, grad_tracked=True, dtype=dtype)


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype), grad_tracked=False)


class TapeEntry:
    __slots__ = ("kind", "inputs", "output", "vjp")

    def __init__(self, kind, inputs, output, vjp):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Tape:
    """Ordered record of primitive applications, replayed in reverse by backward()."""

    def __init__(self):
        self.entries: list[TapeEntry] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False

    def __len__(self) -> int:
        return len(self.entries)


_TAPE_STACK: list[Tape] = []


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _emit(kind: str, inputs: tuple, out: np.ndarray, vjp) -> Tensor:
    """Wrap a primitive result, recording a tape entry when required."""
    if _CHECK_FINITE and not np.all(np.isfinite(out)):
        raise AutodiffError(f"{kind}: non-finite value in output")
    tape = _active_tape()
    tracked = tape is not None and any(t.grad_tracked for t in inputs)
    result = Tensor._wrap(out, grad_tracked=tracked)
    if tracked:
        tape.entries.append(TapeEntry(kind, inputs, result, vjp))
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to the input's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _check_same_dtype(kind, a, b):
    if a.data.dtype != b.data.dtype:
        raise ShapeMismatchError(kind, f"dtype {a.data.dtype} vs {b.data.dtype}")


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("add", a, b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeMismatchError("add", f"{a.shape} vs {b.shape}")

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), out, vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("sub", a, b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeMismatchError("sub", f"{a.shape} vs {b.shape}")

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit("sub", (a, b), out, vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("mul", a, b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeMismatchError("mul", f"{a.shape} vs {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _emit("mul", (a, b), out, vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("div", a, b)
    try:
        out = a.data / b.data
    except ValueError:
        raise ShapeMismatchError("div", f"{a.shape} vs {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        return (
            _unbroadcast(g / bd, a.shape),
            _unbroadcast(-g * ad / (bd * bd), b.shape),
        )

    return _emit("div", (a, b), out, vjp)


def neg(a: Tensor) -> Tensor:
    return _emit("neg", (a,), -a.data, lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _emit("log", (a,), np.log(ad), lambda g: (g / ad,))


def relu(a: Tensor) -> Tensor:
    ad = a.data
    return _emit("relu", (a,), np.maximum(ad, 0), lambda g: (g * (ad > 0),))


def gelu(a: Tensor) -> Tensor:
    """Exact erf form: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    ad = a.data
    cdf = 0.5 * (1.0 + erf(ad * _INV_SQRT2))
    out = ad * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * ad * ad) * _INV_SQRT2PI
        return (g * (cdf + ad * pdf),)

    return _emit("gelu", (a,), out, vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError("matmul", f"need ndim>=2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", f"{a.shape} @ {b.shape}")
    _check_same_dtype("matmul", a, b)
    out = np.matmul(a.data, b.data)
    ad, bd = a.data, b.data

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit("matmul", (a, b), out, vjp)


def transpose(a: Tensor, axes: tuple) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit(
        "transpose", (a,), np.transpose(a.data, axes), lambda g: (np.transpose(g, inv),)
    )


def reshape(a: Tensor, shape: tuple) -> Tensor:
    in_shape = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", f"{in_shape} -> {shape}")
    return _emit("reshape", (a,), out, lambda g: (g.reshape(in_shape),))


def broadcast_to(a: Tensor, shape: tuple) -> Tensor:
    in_shape = a.shape
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeMismatchError("broadcast_to", f"{in_shape} -> {shape}")
    return _emit("broadcast_to", (a,), out, lambda g: (_unbroadcast(g, in_shape),))


def concat(tensors, axis: int) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeMismatchError("concat", "empty input list")
    for t in tensors[1:]:
        _check_same_dtype("concat", tensors[0], t)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", f"{[t.shape for t in tensors]} along axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit("concat", tensors, out, vjp)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    n = a.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ShapeMismatchError("slice_axis", f"[{start}:{stop}] on axis {axis} of {a.shape}")
    idx = tuple(slice(None) if d != axis else slice(start, stop) for d in range(a.ndim))
    in_shape = a.shape

    def vjp(g):
        full = np.zeros(in_shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return _emit("slice_axis", (a,), a.data[idx].copy(), vjp)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    in_shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, in_shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, in_shape).copy(),)

    return _emit("sum", (a,), out, vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    in_shape = a.shape
    count = a.size if axis is None else in_shape[axis]
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, in_shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, in_shape).copy(),)

    return _emit("mean", (a,), out, vjp)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _emit("softmax", (a,), out, vjp)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    sm = np.exp(out)

    def vjp(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return _emit("log_softmax", (a,), out, vjp)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatchError("layer_norm", f"gain {gain.shape} / bias {bias.shape} for dim {d}")
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    out = xhat * gain.data + bias.data
    gd = gain.data

    def vjp(g):
        gx_hat = g * gd
        m1 = gx_hat.mean(axis=-1, keepdims=True)
        m2 = (gx_hat * xhat).mean(axis=-1, keepdims=True)
        ga = inv * (gx_hat - m1 - xhat * m2)
        lead = tuple(range(a.ndim - 1))
        ggain = (g * xhat).sum(axis=lead)
        gbias = g.sum(axis=lead)
        return ga, ggain, gbias

    return _emit("layer_norm", (a, gain, bias), out, vjp)


def l2_normalize(a: Tensor, axis: int = -1) -> Tensor:
    n = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    out = a.data / n
    ad = a.data

    def vjp(g):
        dot = (g * ad).sum(axis=axis, keepdims=True)
        return (g / n - ad * (dot / (n * n * n)),)

    return _emit("l2_normalize", (a,), out, vjp)


def cosine_similarity(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatchError("cosine_similarity", f"{a.shape} vs {b.shape}")
    _check_same_dtype("cosine_similarity", a, b)
    ad, bd = a.data, b.data
    na = np.sqrt((ad * ad).sum(axis=axis, keepdims=True))
    nb = np.sqrt((bd * bd).sum(axis=axis, keepdims=True))
    dot = (ad * bd).sum(axis=axis, keepdims=True)
    c = dot / (na * nb)
    out = np.squeeze(c, axis=axis)

    def vjp(g):
        g = np.expand_dims(g, axis)
        ga = g * (bd / (na * nb) - ad * (c / (na * na)))
        gb = g * (ad / (na * nb) - bd * (c / (nb * nb)))
        return ga, gb

    return _emit("cosine_similarity", (a, b), out, vjp)


# ---------------------------------------------------------------------------
# generic dispatch

_PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "exp": exp,
    "log": log,
    "relu": relu,
    "gelu": gelu,
    "matmul": matmul,
    "transpose": transpose,
    "reshape": reshape,
    "broadcast_to": broadcast_to,
    "concat": concat,
    "slice_axis": slice_axis,
    "sum": sum_,
    "mean": mean,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "layer_norm": layer_norm,
    "l2_normalize": l2_normalize,
    "cosine_similarity": cosine_similarity,
}


def primitive_names():
    return sorted(_PRIMITIVES)


def apply_primitive(kind: str, inputs, attrs: dict | None = None) -> Tensor:
    """Apply a registered primitive to a list of tensors.

    ``concat`` takes its operands as the input list; every other primitive
    takes positional tensors followed by keyword attributes.
    """
    fn = _PRIMITIVES.get(kind)
    if fn is None:
        raise UnknownPrimitiveError(kind)
    attrs = attrs or {}
    if kind == "concat":
        return fn(list(inputs), **attrs)
    return fn(*inputs, **attrs)


# ---------------------------------------------------------------------------
# backward


def backward(tape: Tape, root: Tensor) -> dict:
    """Accumulate gradients of a scalar root into the tape's tracked leaves.

    Returns a map {leaf Tensor: ndarray}; each tracked leaf also accumulates
    into its ``grad`` field. A tape can be consumed once.
    """
    if tape.consumed:
        raise AutodiffError("backward called twice on a consumed tape")
    if root.size != 1:
        raise AutodiffError(f"backward root must be scalar, got shape {root.shape}")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    produced = {id(e.output) for e in tape.entries}
    leaf_grads: dict[Tensor, np.ndarray] = {}

    for entry in reversed(tape.entries):
        g_out = grads.pop(id(entry.output), None)
        if g_out is None:
            continue
        in_grads = entry.vjp(g_out)
        for t, g in zip(entry.inputs, in_grads):
            if g is None or not t.grad_tracked:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
            if key not in produced:
                leaf_grads[t] = grads[key]

    for leaf, g in leaf_grads.items():
        g = np.ascontiguousarray(g)
        leaf.grad = g if leaf.grad is None else leaf.grad + g
    return leaf_grads
