"""Dense tensors with reverse-mode automatic differentiation.

The compute graph is implicit: every operation returns a Tensor holding
references to its parents and a closure that maps the output gradient to
parent gradients. backward() walks that DAG once in reverse topological
order, so each node's gradient is fully accumulated before it is used.
Arrays are float32 by default; grad_check temporarily promotes the
parameters it probes to float64 because float32 finite differences are
too noisy to certify anything.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward passes only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class EmptyBatchError(ValueError):
    """A loss was requested over zero labeled positions."""


class Tensor:
    """A dense float array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple:
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

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def parameter(data, dtype=np.float32) -> Tensor:
    """Wrap an array as a trainable leaf."""
    return Tensor(data, requires_grad=True, dtype=dtype)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    """Build an op output; record the graph edge only when it can matter."""
    record = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = record
    out._parents = tuple(parents) if record else ()
    out._backward = backward_fn if record else None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward_fn(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _result(data, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward_fn(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return (ga, gb)

    return _result(data, (a, b), backward_fn)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = as_tensor(a)
    c = a.data.dtype.type(c)
    data = a.data * c

    def backward_fn(g):
        return (g * c,)

    return _result(data, (a,), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batch broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs rank >= 2 operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward_fn(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)
        return (ga, gb)

    return _result(data, (a, b), backward_fn)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward_fn(g):
        return (np.transpose(g, inverse),)

    return _result(data, (a,), backward_fn)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    orig = a.data.shape
    data = a.data.reshape(shape)

    def backward_fn(g):
        return (g.reshape(orig),)

    return _result(data, (a,), backward_fn)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=True),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=True),)

    return _result(data, (a,), backward_fn)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along one axis."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return _result(s, (x,), backward_fn)


_GELU_K = 0.7978845608028654  # sqrt(2/pi)
_GELU_C = 0.044715


def gelu(x: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    x = as_tensor(x)
    d = x.data
    inner = _GELU_K * (d + _GELU_C * d * d * d)
    t = np.tanh(inner)
    out = 0.5 * d * (1.0 + t)

    def backward_fn(g):
        dinner = _GELU_K * (1.0 + 3.0 * _GELU_C * d * d)
        dx = 0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * dinner
        return (g * dx,)

    return _result(out, (x,), backward_fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    n = x.data.shape[-1]
    if gamma.data.shape != (n,) or beta.data.shape != (n,):
        raise ValueError(
            f"layer_norm affine shape mismatch: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}"
        )
    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def backward_fn(g):
        gx = ggamma = gbeta = None
        lead = tuple(range(g.ndim - 1))
        if gamma.requires_grad:
            ggamma = (g * xhat).sum(axis=lead)
        if beta.requires_grad:
            gbeta = g.sum(axis=lead)
        if x.requires_grad:
            dxhat = g * gamma.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            gx = inv * (dxhat - m1 - xhat * m2)
        return (gx, ggamma, gbeta)

    return _result(out, (x, gamma, beta), backward_fn)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup; gradient scatters back with repeat accumulation."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError(f"embedding ids must be integers, got dtype {ids.dtype}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"embedding id out of range for table with {table.shape[0]} rows")
    data = table.data[ids]

    def backward_fn(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _result(data, (table,), backward_fn)


def select_position(x: Tensor, pos: int) -> Tensor:
    """Pick one sequence position from a (batch, length, features) tensor."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ValueError(f"select_position expects rank 3, got {x.shape}")
    data = x.data[:, pos, :].copy()

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        gx[:, pos, :] = g
        return (gx,)

    return _result(data, (x,), backward_fn)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; draws one mask from rng per call."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    keep /= x.data.dtype.type(1.0 - rate)
    return mul(x, Tensor(keep, dtype=x.data.dtype))


def cross_entropy_masked(logits: Tensor, positions, label_ids) -> Tensor:
    """Mean negative log-likelihood over the labeled rows of a (rows, vocab) tensor.

    positions/label_ids are parallel integer arrays; only those rows enter
    the loss, everything else gets zero gradient.
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ValueError(f"cross_entropy_masked expects rank 2 logits, got {logits.shape}")
    positions = np.asarray(positions, dtype=np.int64).reshape(-1)
    label_ids = np.asarray(label_ids, dtype=np.int64).reshape(-1)
    if positions.shape != label_ids.shape:
        raise ValueError(
            f"positions and labels disagree: {positions.shape} vs {label_ids.shape}"
        )
    if positions.size == 0:
        raise EmptyBatchError("empty label batch: loss over zero positions is undefined")
    n_rows, n_classes = logits.shape
    if positions.min() < 0 or positions.max() >= n_rows:
        raise ValueError(f"label position out of range for {n_rows} rows")
    if label_ids.min() < 0 or label_ids.max() >= n_classes:
        raise ValueError(f"label id out of range for {n_classes} classes")

    rows = logits.data[positions]
    m = rows.max(axis=-1, keepdims=True)
    shifted = rows - m
    logz = np.log(np.exp(shifted).sum(axis=-1)) + m[:, 0]
    picked = rows[np.arange(positions.size), label_ids]
    losses = logz - picked
    out = np.asarray(losses.mean(), dtype=logits.data.dtype)
    n = positions.size

    def backward_fn(g):
        p = np.exp(shifted)
        p /= p.sum(axis=-1, keepdims=True)
        p[np.arange(n), label_ids] -= 1.0
        p *= np.asarray(g, dtype=p.dtype) / n
        gl = np.zeros_like(logits.data)
        np.add.at(gl, positions, p)
        return (gl,)

    return _result(out, (logits,), backward_fn)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into .grad of every trainable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def _graph_leaves(loss: Tensor) -> list[Tensor]:
    leaves: list[Tensor] = []
    seen: set[int] = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node._parents:
            stack.extend(node._parents)
        elif node._backward is None:
            leaves.append(node)
    return leaves


def grad_check(build_loss: Callable[[], Tensor], params: Iterable[Tensor],
               eps: float = 1e-3, floor: float = 1e-3) -> float:
    """Compare analytic gradients against central differences.

    build_loss must rebuild the graph from the given parameter tensors on
    every call (and must be deterministic: no dropout). Returns the max
    relative error over all coordinates; an empty parameter list passes
    vacuously with 0.0.

    Coordinates whose gradient magnitude falls below `floor` are compared
    absolutely at floor scale: the difference quotient bottoms out at
    loss-roundoff / eps, so pure relative error on a negligible gradient
    only measures that noise, not correctness.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must be in (0, 1e-2], got {eps}")
    if floor <= 0.0:
        raise ValueError(f"floor must be positive, got {floor}")
    params = list(params)
    if not params:
        return 0.0
    for p in params:
        if p._backward is not None:
            raise ValueError("grad_check params must be leaf tensors")
    # float64 throughout: float32 differences drown in roundoff. Every
    # float leaf of the graph is promoted, not just the probed params,
    # so the finite-difference loss is evaluated at full precision.
    promoted: list[Tensor] = []
    originals: list[np.ndarray] = []

    def promote(t: Tensor) -> None:
        if id(t) not in {id(q) for q in promoted} and t.data.dtype == np.float32:
            promoted.append(t)
            originals.append(t.data)
            t.data = t.data.astype(np.float64)

    try:
        for p in params:
            promote(p)
            p.grad = None
        loss = build_loss()
        if loss.data.size != 1:
            raise ValueError("build_loss must return a scalar")
        extra = [t for t in _graph_leaves(loss) if t.data.dtype == np.float32]
        if extra:
            for t in extra:
                promote(t)
            for p in params:
                p.grad = None
            loss = build_loss()
        backward(loss)
        analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
        worst = 0.0
        with no_grad():
            for p, ana in zip(params, analytic):
                flat = p.data.reshape(-1)
                aflat = ana.reshape(-1)
                for i in range(flat.size):
                    v = flat[i]
                    flat[i] = v + eps
                    f_plus = float(build_loss().data)
                    flat[i] = v - eps
                    f_minus = float(build_loss().data)
                    flat[i] = v
                    numeric = (f_plus - f_minus) / (2.0 * eps)
                    a = float(aflat[i])
                    rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                    worst = max(worst, rel)
        return worst
    finally:
        for t, d in zip(promoted, originals):
            t.data = d
        for p in params:
            p.grad = None
