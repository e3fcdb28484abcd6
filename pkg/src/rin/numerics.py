"""Dense float64 tensors with reverse-mode differentiation, plus the RNG,
dropout, gradient checking, and Adam machinery the model math runs on.

Every op builds a node in an implicit computation graph; backward() walks the
graph in reverse topological order and accumulates gradients with += into the
.grad slot of every tensor that requires them. Gradients persist until
zero_grads() is called explicitly.

Everything is float64: the package is verified against central finite
differences, and the headroom matters more than throughput at the scales this
engine targets.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, ShapeError


class Rng:
    """Deterministic random source (PCG64): same seed, same draw sequence."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def random(self, shape) -> np.ndarray:
        """Draws in [0, 1)."""
        return self._gen.random(size=shape)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


class Tensor:
    """A dense float64 array with an optional gradient slot.

    Tensors produced by ops carry enough structure (_parents, _backward) to
    participate in reverse-mode differentiation; leaf tensors created directly
    are the trainable parameters and inputs.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

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

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars are wrapped as constant tensors.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add g into t.grad, allocating on first touch. No-op for frozen tensors."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def custom_op(data: np.ndarray, parents: Sequence[Tensor],
              backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    """Build a graph node: data plus a closure that routes the output gradient
    to the parents. The hook other modules use to register fused ops."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def backward(loss: Tensor) -> None:
    """Fill .grad of every reachable requires_grad tensor with d(loss)/d(t).

    Gradients accumulate (+=); call zero_grads between steps. The loss must be
    a scalar.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    accumulate(loss, np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# Elementwise arithmetic (numpy broadcasting; backward un-broadcasts)
# ---------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce g back down to `shape` by summing the broadcast axes."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        accumulate(a, _unbroadcast(g, a.shape))
        accumulate(b, _unbroadcast(g, b.shape))

    return custom_op(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        accumulate(a, _unbroadcast(g, a.shape))
        accumulate(b, _unbroadcast(-g, b.shape))

    return custom_op(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        accumulate(a, _unbroadcast(g * b.data, a.shape))
        accumulate(b, _unbroadcast(g * a.data, b.shape))

    return custom_op(a.data * b.data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        accumulate(a, -g)

    return custom_op(-a.data, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        accumulate(a, np.full_like(a.data, float(g)))

    return custom_op(np.asarray(a.data.sum()), (a,), bwd)


# ---------------------------------------------------------------------------
# Linear algebra and structure
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of 2-D tensors. dA = G @ B^T, dB = A^T @ G."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.shape} x {b.shape}")

    def bwd(g):
        accumulate(a, g @ b.data.T)
        accumulate(b, a.data.T @ g)

    return custom_op(a.data @ b.data, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got shape {a.shape}")

    def bwd(g):
        accumulate(a, g.T)

    return custom_op(a.data.T.copy(), (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    def bwd(g):
        accumulate(a, g.reshape(a.shape))

    return custom_op(a.data.reshape(shape), (a,), bwd)


def concat(a: Tensor, b: Tensor, axis: int) -> Tensor:
    """Concatenate along `axis`; backward splits the incoming gradient."""
    if a.ndim != b.ndim:
        raise ShapeError(f"concat rank mismatch: {a.shape} vs {b.shape}")
    for ax in range(a.ndim):
        if ax != axis % a.ndim and a.shape[ax] != b.shape[ax]:
            raise ShapeError(
                f"concat extents differ off axis {axis}: {a.shape} vs {b.shape}"
            )
    split_at = a.shape[axis % a.ndim]

    def bwd(g):
        ga, gb = np.split(g, [split_at], axis=axis)
        accumulate(a, ga)
        accumulate(b, gb)

    return custom_op(np.concatenate((a.data, b.data), axis=axis), (a, b), bwd)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; backward scatters into the slice."""
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[idx] = g
            accumulate(a, full)

    return custom_op(a.data[idx].copy(), (a,), bwd)


def split(a: Tensor, index: int, axis: int) -> tuple[Tensor, Tensor]:
    """Inverse of concat: cut `a` at `index` along `axis`."""
    total = a.shape[axis]
    return (
        narrow(a, axis, 0, index),
        narrow(a, axis, index, total - index),
    )


def index_axis0(a: Tensor, i: int) -> Tensor:
    """Pick sub-tensor a[i]; backward scatters into that slot."""

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[i] = g
            accumulate(a, full)

    return custom_op(a.data[i].copy(), (a,), bwd)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    ts = list(tensors)

    def bwd(g):
        for i, t in enumerate(ts):
            accumulate(t, g[i])

    return custom_op(np.stack([t.data for t in ts]), ts, bwd)


def take_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Row lookup (embedding gather); backward scatter-adds into the table."""
    idx = np.asarray(ids, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ContractError(
            f"row index out of range for table with {table.shape[0]} rows"
        )

    def bwd(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, idx, g)
            accumulate(table, full)

    return custom_op(table.data[idx].copy(), (table,), bwd)


def gather_rows(a: Tensor, col_ids: Sequence[int]) -> Tensor:
    """out[i] = a[i, col_ids[i]]; backward scatter-adds into those cells."""
    idx = np.asarray(col_ids, dtype=np.intp)
    rows = np.arange(a.shape[0])

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, (rows, idx), g)
            accumulate(a, full)

    return custom_op(a.data[rows, idx].copy(), (a,), bwd)


def flip_rows(a: Tensor) -> Tensor:
    """Reverse the leading axis (used to run the backward LSTM direction)."""

    def bwd(g):
        accumulate(a, g[::-1].copy())

    return custom_op(a.data[::-1].copy(), (a,), bwd)


def reduce_max_rows(a: Tensor) -> tuple[Tensor, list[int]]:
    """Column-wise maximum of a[m, l] plus argmax rows.

    Backward routes each column's gradient only to its recorded argmax row;
    ties resolve to the first occurrence.
    """
    if a.ndim != 2:
        raise ShapeError(f"reduce_max_rows expects 2-D, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ContractError("reduce_max_rows over an empty row set")
    argmax = np.argmax(a.data, axis=0)
    cols = np.arange(a.shape[1])

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[argmax, cols] = g
            accumulate(a, full)

    out = custom_op(a.data[argmax, cols].copy(), (a,), bwd)
    return out, [int(i) for i in argmax]


# ---------------------------------------------------------------------------
# Activations and pointwise nonlinearities
# ---------------------------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        accumulate(a, g * y * (1.0 - y))

    return custom_op(y, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def bwd(g):
        accumulate(a, g * (1.0 - y * y))

    return custom_op(y, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        accumulate(a, g * mask)

    return custom_op(np.where(mask, a.data, 0.0), (a,), bwd)


def softmax_last(a: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        accumulate(a, y * (g - inner))

    return custom_op(y, (a,), bwd)


def activation(a: Tensor, kind: str) -> Tensor:
    table = {
        "sigmoid": sigmoid,
        "tanh": tanh,
        "relu": relu,
        "softmax": softmax_last,
    }
    if kind not in table:
        raise ConfigError(f"unknown activation kind {kind!r}")
    return table[kind](a)


def clamped_log(a: Tensor, floor: float = 1e-12) -> Tensor:
    """log(max(a, floor)); gradient is zero where the clamp binds."""
    clamped = np.maximum(a.data, floor)
    live = a.data > floor

    def bwd(g):
        accumulate(a, np.where(live, g / clamped, 0.0))

    return custom_op(np.log(clamped), (a,), bwd)


def dropout(x: Tensor, rate: float, mode: str, rng: Rng | None) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by
    1/(1-rate) so eval is a pure identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("train-mode dropout needs an Rng")
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    factor = keep * scale

    def bwd(g):
        accumulate(x, g * factor)

    return custom_op(x.data * factor, (x,), bwd)


# ---------------------------------------------------------------------------
# Optimization and verification
# ---------------------------------------------------------------------------


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, params: Sequence[Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(params: Sequence[Tensor], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update. Grads are left in place; callers
    zero them via zero_grads explicitly."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    params = list(params)
    for i, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"adam_step: parameter {i} has no gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, p in enumerate(params):
        g = p.grad
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def global_grad_norm(params: Sequence[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))


def clip_grads(params: Sequence[Tensor], max_norm: float) -> None:
    norm = global_grad_norm(params)
    if norm > max_norm > 0:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= factor


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor],
               eps: float = 1e-5) -> float:
    """Compare analytic gradients of the scalar f() against central finite
    differences over every component of `params`.

    Returns max over components of |a - n| / max(1e-8, |a| + |n|). f must be
    deterministic (detected by two identical evaluations) and is re-run with
    perturbed parameter entries, so it has to read params by reference.
    """
    if eps <= 0:
        raise ConfigError(f"grad_check eps must be positive, got {eps}")
    params = list(params)
    first = float(f().data)
    second = float(f().data)
    if first != second:
        raise ContractError(
            "grad_check requires a deterministic objective "
            f"(got {first!r} then {second!r})"
        )
    zero_grads(params)
    backward(f())
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
        for p in params
    ]
    zero_grads(params)
    worst = 0.0
    for p, a_grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        a_flat = a_grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f().data)
            flat[i] = orig - eps
            f_minus = float(f().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = a_flat[i]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            if err > worst:
                worst = err
    return worst
