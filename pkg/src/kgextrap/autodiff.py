"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Operations only record themselves while a :class:`Tape` is active, so
evaluation code can run the same functions without bookkeeping::

    with Tape() as tape:
        loss = sum_(mul(x, x))
    grads = tape.backward(loss, {"x": x})

Broadcasting is limited to scalar-with-tensor. Complex numbers are real
tensors whose last axis has size 2 (real, imaginary).
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import ContractError, DomainError, ShapeError

_TAPES: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def constant(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


class Tape:
    """Ordered record of executed operations (topological by construction)."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, parents: tuple[Tensor, ...], backward: Callable) -> None:
        self.nodes.append((out, parents, backward))

    def backward(self, loss: Tensor, params: Mapping[str, Tensor] | Sequence[Tensor] | None = None):
        """Gradients of scalar ``loss`` with respect to leaf tensors.

        With ``params`` given (mapping or sequence), returns gradients keyed
        the same way, zeros for leaves the loss does not reach. Otherwise
        returns ``{leaf tensor: gradient}`` for every reached leaf.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for out, parents, fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for p, pg in zip(parents, fn(g)):
                if pg is None or not p.requires_grad:
                    continue
                k = id(p)
                grads[k] = grads[k] + pg if k in grads else pg
                leaves.setdefault(k, p)
        if id(loss) in grads and loss.requires_grad:
            leaves.setdefault(id(loss), loss)
        if params is None:
            return {leaves[k]: g for k, g in grads.items() if k in leaves}
        if isinstance(params, Mapping):
            return {name: _leaf_grad(grads, t) for name, t in params.items()}
        return [_leaf_grad(grads, t) for t in params]


def _leaf_grad(grads, t: Tensor) -> np.ndarray:
    g = grads.get(id(t))
    return np.zeros_like(t.data) if g is None else np.asarray(g, dtype=np.float64).reshape(t.shape)


def backward(tape: Tape, loss: Tensor, params=None):
    return tape.backward(loss, params)


def _make(data, parents: tuple[Tensor, ...], fn: Callable) -> Tensor:
    out = Tensor(data)
    if _TAPES and any(p.requires_grad for p in parents):
        out.requires_grad = True
        _TAPES[-1].record(out, parents, fn)
    return out


def detach(a: Tensor) -> Tensor:
    return Tensor(constant(a).data)


# ---------------------------------------------------------------- elementwise


def _pair(a, b, op: str):
    a, b = constant(a), constant(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape} (only scalar broadcasting is supported)")
    return a, b


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _pair(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b, "mul")
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _pair(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")
    q = a.data / b.data
    return _make(
        q, (a, b), lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * q / b.data, b.shape))
    )


def neg(a) -> Tensor:
    a = constant(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = constant(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = constant(a)
    if np.any(a.data <= 0):
        raise DomainError("log: input must be strictly positive")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = constant(a)
    s = _sigmoid(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


def log_sigmoid(a) -> Tensor:
    """Numerically stable ``log(sigmoid(a))``."""
    a = constant(a)
    y = -np.logaddexp(0.0, -a.data)
    return _make(y, (a,), lambda g: (g * _sigmoid(-a.data),))


def relu(a) -> Tensor:
    a = constant(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def cos(a) -> Tensor:
    a = constant(a)
    return _make(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def sin(a) -> Tensor:
    a = constant(a)
    return _make(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


# ---------------------------------------------------------------- shape ops


def reshape(a, shape) -> Tensor:
    a = constant(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a) -> Tensor:
    a = constant(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return _make(a.data.T, (a,), lambda g: (g.T,))


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    ts = tuple(constant(t) for t in tensors)
    if not ts:
        raise ShapeError("concat of an empty sequence")
    ref = ts[0].shape
    ax = axis % len(ref)
    for t in ts[1:]:
        if len(t.shape) != len(ref) or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape} along axis {axis}")
    splits = np.cumsum([t.shape[ax] for t in ts])[:-1]
    return _make(np.concatenate([t.data for t in ts], axis=ax), ts, lambda g: tuple(np.split(g, splits, axis=ax)))


def matmul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x, w) -> Tensor:
    """Row-wise ``W·x`` for each row of ``x``: ``x @ W.T`` with W of shape (out, in)."""
    return matmul(x, transpose(w))


# ---------------------------------------------------------------- reductions


def _expand_back(g: np.ndarray, shape, axis) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    return np.broadcast_to(np.expand_dims(g, axis), shape).copy()


def sum_(a, axis=None) -> Tensor:
    a = constant(a)
    return _make(np.sum(a.data, axis=axis), (a,), lambda g: (_expand_back(g, a.shape, axis),))


def mean(a, axis=None) -> Tensor:
    a = constant(a)
    n = a.data.size if axis is None else a.shape[axis]
    if n == 0:
        raise ShapeError("mean over an empty axis")
    return _make(np.mean(a.data, axis=axis), (a,), lambda g: (_expand_back(g, a.shape, axis) / n,))


def softmax(a, axis: int = -1) -> Tensor:
    a = constant(a)
    z = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _make(s, (a,), lambda g: (s * (g - np.sum(g * s, axis=axis, keepdims=True)),))


def l1_norm(a) -> Tensor:
    """Row-wise L1 norm over the last axis (subgradient 0 at 0)."""
    a = constant(a)
    return _make(np.abs(a.data).sum(axis=-1), (a,), lambda g: (g[..., None] * np.sign(a.data),))


def l2_norm(a) -> Tensor:
    a = constant(a)
    n = np.sqrt(np.sum(a.data * a.data, axis=-1))

    def back(g):
        safe = np.where(n > 0, n, 1.0)
        return (np.where(n[..., None] > 0, g[..., None] * a.data / safe[..., None], 0.0),)

    return _make(n, (a,), back)


# ---------------------------------------------------------------- indexing


def _index(idx) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"index arrays must be 1-D, got shape {idx.shape}")
    return idx


def gather(a, idx) -> Tensor:
    """Row lookup ``a[idx]``."""
    a, idx = constant(a), _index(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError(f"gather index out of range for {a.shape[0]} rows")
    return _make(a.data[idx], (a,), lambda g: (kernels.segment_sum(g, idx, a.shape[0]),))


def scatter_sum(a, idx, n_groups: int) -> Tensor:
    """Sum rows of ``a`` into ``n_groups`` buckets given by ``idx``."""
    a, idx = constant(a), _index(idx)
    if idx.shape[0] != a.shape[0]:
        raise ShapeError(f"scatter: {idx.shape[0]} indices for {a.shape[0]} rows")
    return _make(kernels.segment_sum(a.data, idx, n_groups), (a,), lambda g: (g[idx],))


def scatter_mean(a, idx, n_groups: int) -> Tensor:
    """Mean of rows per bucket; empty buckets are zero."""
    a, idx = constant(a), _index(idx)
    if idx.shape[0] != a.shape[0]:
        raise ShapeError(f"scatter: {idx.shape[0]} indices for {a.shape[0]} rows")
    counts = np.bincount(idx, minlength=n_groups).astype(np.float64)
    denom = np.maximum(counts, 1.0).reshape((n_groups,) + (1,) * (a.ndim - 1))
    out = kernels.segment_sum(a.data, idx, n_groups) / denom
    return _make(out, (a,), lambda g: ((g / denom)[idx],))


# ---------------------------------------------------------------- complex


def _check_complex(*ts: Tensor) -> None:
    for t in ts:
        if t.ndim == 0 or t.shape[-1] != 2:
            raise ShapeError(f"complex tensors need a trailing axis of size 2, got {t.shape}")
    for t in ts[1:]:
        if t.shape != ts[0].shape:
            raise ShapeError(f"complex op: shape mismatch {ts[0].shape} vs {t.shape}")


def _cmul(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    xr, xi, yr, yi = x[..., 0], x[..., 1], y[..., 0], y[..., 1]
    return np.stack([xr * yr - xi * yi, xr * yi + xi * yr], axis=-1)


def _cconj(x: np.ndarray) -> np.ndarray:
    return np.stack([x[..., 0], -x[..., 1]], axis=-1)


def complex_mul(a, b) -> Tensor:
    """Hadamard product of complex tensors."""
    a, b = constant(a), constant(b)
    _check_complex(a, b)
    return _make(_cmul(a.data, b.data), (a, b), lambda g: (_cmul(g, _cconj(b.data)), _cmul(g, _cconj(a.data))))


def complex_conj(a) -> Tensor:
    a = constant(a)
    _check_complex(a)
    return _make(_cconj(a.data), (a,), lambda g: (_cconj(g),))


def complex_div(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _check_complex(a, b)
    mod2 = b.data[..., 0] ** 2 + b.data[..., 1] ** 2
    if np.any(mod2 == 0):
        raise DomainError("complex_div: division by a zero-modulus coordinate")
    inv_b = _cconj(b.data) / mod2[..., None]
    q = _cmul(a.data, inv_b)
    # d q/d a = 1/b, d q/d b = -q/b; the cotangent picks up the conjugate
    return _make(q, (a, b), lambda g: (_cmul(g, _cconj(inv_b)), -_cmul(g, _cconj(_cmul(q, inv_b)))))


def complex_real(a) -> Tensor:
    a = constant(a)
    _check_complex(a)
    return _make(a.data[..., 0].copy(), (a,), lambda g: (np.stack([g, np.zeros_like(g)], axis=-1),))


def complex_abs(a) -> Tensor:
    """Per-coordinate modulus (subgradient 0 at 0)."""
    a = constant(a)
    _check_complex(a)
    m = np.sqrt(a.data[..., 0] ** 2 + a.data[..., 1] ** 2)

    def back(g):
        safe = np.where(m > 0, m, 1.0)[..., None]
        return (np.where(m[..., None] > 0, g[..., None] * a.data / safe, 0.0),)

    return _make(m, (a,), back)


def complex_from_phase(theta) -> Tensor:
    """Unit-modulus complex numbers ``cos θ + i sin θ``."""
    theta = constant(theta)
    c, s = np.cos(theta.data), np.sin(theta.data)
    return _make(np.stack([c, s], axis=-1), (theta,), lambda g: (g[..., 1] * c - g[..., 0] * s,))


# ---------------------------------------------------------------- oracle


def finite_difference(fn: Callable[[], float], x: np.ndarray, eps: float = 1e-5, indices=None) -> np.ndarray:
    """Central-difference gradient of scalar ``fn()`` w.r.t. array ``x`` (perturbed in place).

    ``indices`` limits the check to some flat positions; others are left 0.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat_x, flat_g = x.reshape(-1), grad.reshape(-1)
    positions = range(flat_x.size) if indices is None else indices
    for i in positions:
        orig = flat_x[i]
        flat_x[i] = orig + eps
        up = fn()
        flat_x[i] = orig - eps
        down = fn()
        flat_x[i] = orig
        flat_g[i] = (up - down) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> float:
    diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    scale = max(np.linalg.norm(np.ravel(analytic)), np.linalg.norm(np.ravel(numeric)), floor)
    return float(diff / scale)
