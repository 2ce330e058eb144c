"""Dense-tensor engine with tape-based reverse-mode differentiation.

Values are float64 numpy arrays. Every primitive computes its result eagerly
and, when a Tape is active and some input requires gradients, records a
vector-Jacobian callback on the tape. `Tape.backward` replays the recorded
operations once, in reverse execution order, accumulating adjoints into
`Tensor.grad`. With no tape active a forward pass is plain numpy with zero
bookkeeping, which keeps inference and finite-difference probes cheap.

Broadcasting is deliberately narrow: a binary op accepts equal shapes, a
python scalar, or a second operand whose shape matches the trailing axes of
the first (a per-channel row vector broadcast over time). Anything else is a
DimensionError rather than a silent numpy broadcast.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NumericError

DTYPE = np.float64


class Tensor:
    """A dense n-dimensional array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
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

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars are treated as constants.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return rsub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def zeros(shape, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=DTYPE), requires_grad=requires_grad, name=name)


class _Recorded:
    """One executed primitive: its output, inputs, and adjoint callback."""

    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of executed primitives, replayed backwards for adjoints."""

    def __init__(self):
        self._ops: list[_Recorded] = []
        self.visited = 0

    def __len__(self) -> int:
        return len(self._ops)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self, "tape stack mismatch"
        return False

    def record(self, rec: _Recorded):
        self._ops.append(rec)

    def backward(self, loss: Tensor):
        """Seed d(loss)/d(loss)=1 and accumulate adjoints into every
        reachable tensor with requires_grad set. Each recorded operation is
        visited exactly once, in reverse execution order."""
        if loss.data.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not np.isfinite(loss.data).all():
            raise NumericError("loss is not finite")
        loss.grad = np.ones_like(loss.data)
        self.visited = 0
        for rec in reversed(self._ops):
            self.visited += 1
            g = rec.out.grad
            if g is None:
                continue
            grads = rec.vjp(g)
            for t, gi in zip(rec.inputs, grads):
                if gi is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.array(gi, dtype=DTYPE, copy=True)
                else:
                    t.grad = t.grad + gi


_TAPE_STACK: list[Tape] = []


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _finish(out_data: np.ndarray, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(_Recorded(out, inputs, vjp))
    return out


def _check_trailing(a: Tensor, b: Tensor, op: str):
    if b.ndim > a.ndim or b.shape != a.shape[a.ndim - b.ndim:]:
        raise DimensionError(
            f"{op}: shape {b.shape} does not match {a.shape} or its trailing axes"
        )


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    axes = tuple(range(g.ndim - len(shape)))
    return g.sum(axis=axes)


# ---------------------------------------------------------------------------
# elementwise binary ops


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        return _finish(a.data + c, (a,), lambda g: (g,))
    _check_trailing(a, b, "add")
    return _finish(a.data + b.data, (a, b), lambda g: (g, _reduce_to(g, b.shape)))


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        return _finish(a.data - c, (a,), lambda g: (g,))
    _check_trailing(a, b, "sub")
    return _finish(a.data - b.data, (a, b), lambda g: (g, -_reduce_to(g, b.shape)))


def rsub(a: Tensor, b) -> Tensor:
    # scalar - tensor
    c = float(b)
    return _finish(c - a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        return _finish(a.data * c, (a,), lambda g: (g * c,))
    _check_trailing(a, b, "mul")
    ad, bd = a.data, b.data
    return _finish(
        ad * bd, (a, b), lambda g: (g * bd, _reduce_to(g * ad, b.shape))
    )


def div(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        return _finish(a.data / c, (a,), lambda g: (g / c,))
    _check_trailing(a, b, "div")
    ad, bd = a.data, b.data
    return _finish(
        ad / bd,
        (a, b),
        lambda g: (g / bd, _reduce_to(-g * ad / (bd * bd), b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return _finish(-a.data, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# elementwise unary ops (shape-agnostic)


def relu(a: Tensor) -> Tensor:
    # np.maximum keeps non-finite inputs visible instead of masking them
    mask = a.data > 0
    return _finish(np.maximum(a.data, 0.0), (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _finish(t, (a,), lambda g: (g * (1.0 - t * t),))


def sigmoid(a: Tensor) -> Tensor:
    # stable in both tails
    s = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                 np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    return _finish(s, (a,), lambda g: (g * s * (1.0 - s),))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    return _finish(e, (a,), lambda g: (g * e,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _finish(np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    s = np.sqrt(a.data)
    return _finish(s, (a,), lambda g: (g * 0.5 / s,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _finish(ad * ad, (a,), lambda g: (g * 2.0 * ad,))


def maximum(a: Tensor, floor: float) -> Tensor:
    # subgradient 0 at the tie, so a floored value stops feeding back
    mask = a.data > floor
    return _finish(np.where(mask, a.data, floor), (a,), lambda g: (g * mask,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    mask = (a.data > lo) & (a.data < hi)
    return _finish(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def smooth_l1(a: Tensor) -> Tensor:
    """Huber-style penalty: 0.5*x^2 for |x| < 1, |x| - 0.5 beyond."""
    ad = a.data
    inner = np.abs(ad) < 1.0
    out = np.where(inner, 0.5 * ad * ad, np.abs(ad) - 0.5)
    return _finish(out, (a,), lambda g: (g * np.where(inner, ad, np.sign(ad)),))


# ---------------------------------------------------------------------------
# structural ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 tensors, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner extents disagree, {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _finish(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose expects rank 2, got {a.shape}")
    return _finish(a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _finish(a.data.reshape(shape).copy(), (a,), lambda g: (g.reshape(old),))


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise DimensionError("concat of zero tensors")
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _finish(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), vjp)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    if not (0 <= start and start + length <= a.shape[axis]):
        raise DimensionError(
            f"narrow [{start}:{start + length}] out of range for axis {axis} of {a.shape}"
        )
    idx = tuple(
        slice(start, start + length) if d == axis else slice(None) for d in range(a.ndim)
    )

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _finish(a.data[idx].copy(), (a,), vjp)


def gather_rows(a: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if a.ndim != 2:
        raise DimensionError(f"gather_rows expects a rank-2 table, got {a.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise DimensionError(f"row index out of range for table with {a.shape[0]} rows")

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _finish(a.data[idx].copy(), (a,), vjp)


def broadcast_rows(v: Tensor, rows: int) -> Tensor:
    """Tile a vector [d] into [rows, d]; the adjoint sums over rows."""
    if v.ndim != 1:
        raise DimensionError(f"broadcast_rows expects rank 1, got {v.shape}")
    out = np.broadcast_to(v.data, (rows, v.shape[0])).copy()
    return _finish(out, (v,), lambda g: (g.sum(axis=0),))


def outer_add(a: Tensor, b: Tensor) -> Tensor:
    """[T, d] x [N, d] -> [T, N, d] with out[i, n] = a[i] + b[n]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"outer_add: incompatible shapes {a.shape}, {b.shape}")
    out = a.data[:, None, :] + b.data[None, :, :]
    return _finish(out, (a, b), lambda g: (g.sum(axis=1), g.sum(axis=0)))


def dot_last(a: Tensor, w: Tensor) -> Tensor:
    """Contract the last axis of `a` with a vector: [..., d] . [d] -> [...]."""
    if w.ndim != 1 or a.shape[-1] != w.shape[0]:
        raise DimensionError(f"dot_last: {a.shape} . {w.shape}")
    ad, wd = a.data, w.data

    def vjp(g):
        ga = g[..., None] * wd
        gw = ad.reshape(-1, wd.shape[0]).T @ g.reshape(-1)
        return (ga, gw)

    return _finish(ad @ wd, (a, w), vjp)


# ---------------------------------------------------------------------------
# reductions


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        return _finish(
            np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),)
        )

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _finish(a.data.sum(axis=axis), (a,), vjp)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    if axis is None:
        return _finish(
            np.asarray(a.data.mean()),
            (a,),
            lambda g: (np.broadcast_to(g / count, a.shape).copy(),),
        )

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g / count, axis), a.shape).copy(),)

    return _finish(a.data.mean(axis=axis), (a,), vjp)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`; rows sum to one."""
    if not np.isfinite(a.data).all():
        raise NumericError("softmax input contains non-finite values")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - inner),)

    return _finish(s, (a,), vjp)


# ---------------------------------------------------------------------------
# temporal convolution


def conv1d(x: Tensor, filters: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Correlate [T, C_in] with filters [k, C_in, C_out] -> [T_out, C_out].

    Zero padding on both temporal ends; T_out = (T + 2p - k) // stride + 1.
    """
    if x.ndim != 2 or filters.ndim != 3:
        raise DimensionError(f"conv1d: input {x.shape}, filters {filters.shape}")
    t_in, c_in = x.shape
    k, f_cin, c_out = filters.shape
    if f_cin != c_in:
        raise DimensionError(f"conv1d: input channels {c_in} vs filter channels {f_cin}")
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv1d: bad stride/padding ({stride}, {padding})")
    if k > t_in + 2 * padding:
        raise DimensionError(
            f"conv1d: kernel {k} exceeds padded length {t_in + 2 * padding}"
        )
    t_out = (t_in + 2 * padding - k) // stride + 1

    xp = np.zeros((t_in + 2 * padding, c_in), dtype=DTYPE)
    xp[padding:padding + t_in] = x.data
    fd = filters.data

    out = np.zeros((t_out, c_out), dtype=DTYPE)
    span = stride * (t_out - 1) + 1
    for j in range(k):
        out += xp[j:j + span:stride] @ fd[j]

    def vjp(g):
        gxp = np.zeros_like(xp)
        gf = np.zeros_like(fd)
        for j in range(k):
            window = xp[j:j + span:stride]
            gxp[j:j + span:stride] += g @ fd[j].T
            gf[j] = window.T @ g
        gx = gxp[padding:padding + t_in]
        return (gx, gf)

    return _finish(out, (x, filters), vjp)


def conv1d_output_length(t: int, k: int, stride: int, padding: int) -> int:
    return (t + 2 * padding - k) // stride + 1
