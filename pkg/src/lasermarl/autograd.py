"""Dense float64 tensors with a define-by-run tape for reverse-mode gradients.

Operations are recorded only while a :class:`Tape` is active (``with Tape() as
tape: ...``). Outside a tape every op is a plain numpy computation, which is
what rollouts use.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from lasermarl.errors import ArgumentError, NumericError, ShapeError

_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite value in tensor {name or ''}".strip())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _bad_item(self)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
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

    def __getitem__(self, idx):
        return slice_(self, idx)


def _bad_item(t: Tensor) -> float:
    raise ShapeError(f"item() needs a single-element tensor, got shape {t.shape}")


class _Record:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out: Tensor, parents: tuple[Tensor, ...], backward: Callable):
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of operations; record order is a topological order."""

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor, inputs: Iterable[Tensor] | None = None) -> None:
        """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

        Tensors listed in ``inputs`` that the loss does not depend on receive
        zero gradients.
        """
        if loss.data.size != 1:
            raise ArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        produced = {id(r.out) for r in self.records}
        if id(loss) not in produced:
            leaves[id(loss)] = loss
        for rec in reversed(self.records):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            for parent, pg in zip(rec.parents, rec.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                if key not in produced:
                    leaves[key] = parent
        for key, leaf in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            g = np.broadcast_to(g, leaf.shape).astype(np.float64, copy=True)
            leaf.grad = g if leaf.grad is None else leaf.grad + g
        if inputs is not None:
            for t in inputs:
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)


def active_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward: Callable, op: str) -> Tensor:
    if not np.isfinite(data).all():
        raise NumericError(f"{op} produced a non-finite value")
    tape = active_tape()
    if tape is None or not any(p.requires_grad for p in parents):
        return Tensor.__new__(Tensor)._init_raw(data, False)
    out = Tensor.__new__(Tensor)._init_raw(data, True)
    tape.records.append(_Record(out, parents, backward))
    return out


def _init_raw(self: Tensor, data: np.ndarray, requires_grad: bool) -> Tensor:
    self.data = data
    self.requires_grad = requires_grad
    self.grad = None
    self.name = None
    return self


Tensor._init_raw = _init_raw  # type: ignore[attr-defined]


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# elementwise binary ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def back(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _result(ad * bd, (a, b), back, "mul")


def minimum(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "minimum")
    pick_a = a.data <= b.data

    def back(g):
        return _unbroadcast(np.where(pick_a, g, 0.0), a.shape), _unbroadcast(np.where(pick_a, 0.0, g), b.shape)

    return _result(np.minimum(a.data, b.data), (a, b), back, "minimum")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _result(np.clip(a.data, lo, hi), (a,), lambda g: (np.where(inside, g, 0.0),), "clip")


# contractions -----------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None
    ad, bd = a.data, b.data

    def back(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2)) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if bd.ndim == 2 and ad.ndim > 2:
                # shared weight: fold the batch axes into one contraction
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return (
            None if ga is None else _unbroadcast(ga, ad.shape),
            None if gb is None else _unbroadcast(gb, bd.shape),
        )

    return _result(out, (a, b), back, "matmul")


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise ShapeError(f"transpose needs at least 2 dims, got shape {a.shape}")
    return _result(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


# elementwise unary --------------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor) -> Tensor:
    x = a.data
    if np.any(x <= 0):
        raise NumericError("log of a non-positive value")
    return _result(np.log(x), (a,), lambda g: (g / x,), "log")


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis (each row sums to one)."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (a,), back, "softmax")


def log_softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def back(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _result(y, (a,), back, "log_softmax")


# reductions and structure ---------------------------------------------------------


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _result(np.asarray(out), (a,), back, "sum")


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat: incompatible shapes " + ", ".join(str(t.shape) for t in tensors)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, tuple(tensors), back, "concat")


def slice_(a: Tensor, idx) -> Tensor:
    shape = a.shape
    try:
        out = a.data[idx]
    except IndexError as err:
        raise ShapeError(f"slice {idx!r} invalid for shape {shape}: {err}") from None

    basic = _is_basic(idx)

    def back(g):
        full = np.zeros(shape)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _result(np.array(out, dtype=np.float64), (a,), back, "slice")


def _is_basic(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, slice)) or p is Ellipsis or p is None for p in parts)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {shape}") from None
    return _result(out, (a,), lambda g: (g.reshape(old),), "reshape")


# composite network pieces -----------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """One LSTM step with fused gate weights ordered (input, forget, cell, output).

    ``params`` holds ``W`` (d_in, 4·d_h), ``U`` (d_h, 4·d_h) and ``b`` (4·d_h,).
    """
    W, U, b = params["W"], params["U"], params["b"]
    d_h = h.shape[-1]
    if W.shape[-1] != 4 * d_h or U.shape != (d_h, 4 * d_h) or x.shape[-1] != W.shape[0]:
        raise ShapeError(
            f"lstm_cell: x {x.shape}, h {h.shape}, W {W.shape}, U {U.shape} are inconsistent"
        )
    if c.shape != h.shape:
        raise ShapeError(f"lstm_cell: c {c.shape} does not match h {h.shape}")
    z = add(add(matmul(x, W), matmul(h, U)), b)
    i = sigmoid(z[..., 0:d_h])
    f = sigmoid(z[..., d_h:2 * d_h])
    g = tanh(z[..., 2 * d_h:3 * d_h])
    o = sigmoid(z[..., 3 * d_h:])
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(Q Kᵀ / sqrt(d)) V, batched over any leading axes."""
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: Q {q.shape}, K {k.shape}, V {v.shape} are inconsistent")
    scores = mul(matmul(q, transpose(k)), 1.0 / math.sqrt(q.shape[-1]))
    return matmul(softmax(scores), v)


def attention_weights(q: Tensor, k: Tensor) -> np.ndarray:
    scores = np.matmul(q.data, np.swapaxes(k.data, -1, -2)) / math.sqrt(q.shape[-1])
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


# verification -----------------------------------------------------------------------


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` rebuilds the scalar loss from the current contents of ``params``.
    """
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = fn()
    tape.backward(loss, inputs=params)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, g in zip(params, analytic):
        for j in np.ndindex(p.shape):
            orig = p.data[j]
            p.data[j] = orig + h
            f_plus = fn().item()
            p.data[j] = orig - h
            f_minus = fn().item()
            p.data[j] = orig
            numeric = (f_plus - f_minus) / (2 * h)
            err = abs(numeric - g[j]) / max(1e-8, abs(numeric) + abs(g[j]))
            worst = max(worst, err)
    for p in params:
        p.grad = None
    return float(worst)


# optimizer --------------------------------------------------------------------------


class Adam:
    """Bias-corrected Adam with global-norm gradient clipping applied first."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: float | None = None,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, grads: Sequence[np.ndarray] | None = None) -> float:
        """Apply one update; returns the pre-clip global gradient norm."""
        if grads is None:
            grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        if len(grads) != len(self.params):
            raise ShapeError(f"adam: {len(grads)} gradients for {len(self.params)} parameters")
        for p, g in zip(self.params, grads):
            if g.shape != p.shape:
                raise ShapeError(f"adam: gradient shape {g.shape} does not match parameter {p.shape}")
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g * scale
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "clip_norm": self.clip_norm,
            "m": [m.copy() for m in self.m],
            "v": [v.copy() for v in self.v],
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for dst, src in zip(self.m, state["m"]):
            dst[...] = src
        for dst, src in zip(self.v, state["v"]):
            dst[...] = src


def global_norm(arrays: Iterable[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in arrays))
