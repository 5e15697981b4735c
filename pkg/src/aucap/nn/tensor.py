"""Reverse-mode automatic differentiation over dense float64 arrays.

Every op builds a node holding its parents and a closure that routes the
incoming gradient to them; ``backward`` walks the graph once in reverse
topological order. The graph is a DAG by construction (parents exist before
children), and traversal is iterative, so sequence models with thousands of
chained steps do not hit recursion limits.
"""

from __future__ import annotations

import numpy as np

from ..errors import GraphStateError, ShapeError

LOG_EPS = 1e-12  # floor inside cross-entropy logs


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A named leaf tensor with a persistent gradient slot."""

    __slots__ = ("name", "grad_ready")

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.grad_ready = False

    def zero_grad(self):
        self.grad[...] = 0.0
        self.grad_ready = False

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g
    if isinstance(t, Parameter):
        t.grad_ready = True


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}  # id -> 0 visiting, 1 done
    stack = [root]
    while stack:
        node = stack[-1]
        nid = id(node)
        st = state.get(nid)
        if st is None:
            state[nid] = 0
            for parent in node._parents:
                if parent.requires_grad and state.get(id(parent)) is None:
                    stack.append(parent)
        elif st == 0:
            state[nid] = 1
            order.append(node)
            stack.pop()
        else:
            stack.pop()
    return order


def backward(loss: Tensor):
    """Propagate gradients from a scalar loss into every reachable Parameter."""
    if loss.data.size != 1:
        raise GraphStateError(f"backward needs a scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise GraphStateError("loss does not depend on any parameter")
    order = _toposort(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


# ---------------------------------------------------------------------------
# arithmetic and structural ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_req = a.requires_grad or b.requires_grad

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return Tensor(a.data + b.data, out_req, (a, b), back if out_req else None)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_req = a.requires_grad or b.requires_grad

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return Tensor(a.data - b.data, out_req, (a, b), back if out_req else None)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_req = a.requires_grad or b.requires_grad

    def back(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(a.data * b.data, out_req, (a, b), back if out_req else None)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    out_req = a.requires_grad or b.requires_grad

    def back(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return Tensor(a.data @ b.data, out_req, (a, b), back if out_req else None)


def linear(x, weights, bias=None) -> Tensor:
    """y = x @ W.T + b with W of shape (out, in); the dense-layer primitive."""
    x, weights = _as_tensor(x), _as_tensor(weights)
    if x.data.ndim != 2 or weights.data.ndim != 2 or x.data.shape[1] != weights.data.shape[1]:
        raise ShapeError(f"linear shapes x={x.data.shape} W={weights.data.shape}")
    y = x.data @ weights.data.T
    parents = [x, weights]
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.data.shape != (weights.data.shape[0],):
            raise ShapeError(f"bias shape {bias.data.shape} vs out dim {weights.data.shape[0]}")
        y = y + bias.data
        parents.append(bias)
    out_req = any(p.requires_grad for p in parents)

    def back(g):
        _accumulate(x, g @ weights.data)
        _accumulate(weights, g.T @ x.data)
        if bias is not None:
            _accumulate(bias, g.sum(axis=0))

    return Tensor(y, out_req, tuple(parents), back if out_req else None)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out_req = any(t.requires_grad for t in tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0, *sizes])

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        out_req,
        tuple(tensors),
        back if out_req else None,
    )


def row_slice(x, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)

    def back(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        _accumulate(x, full)

    return Tensor(x.data[start:stop], x.requires_grad, (x,), back if x.requires_grad else None)


def mean_all(x) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size

    def back(g):
        _accumulate(x, np.full_like(x.data, float(g) / n))

    return Tensor(x.data.mean(), x.requires_grad, (x,), back if x.requires_grad else None)


def sum_all(x) -> Tensor:
    x = _as_tensor(x)

    def back(g):
        _accumulate(x, np.full_like(x.data, float(g)))

    return Tensor(x.data.sum(), x.requires_grad, (x,), back if x.requires_grad else None)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.data))

    def back(g):
        _accumulate(x, g * y * (1.0 - y))

    return Tensor(y, x.requires_grad, (x,), back if x.requires_grad else None)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)

    def back(g):
        _accumulate(x, g * (1.0 - y * y))

    return Tensor(y, x.requires_grad, (x,), back if x.requires_grad else None)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def back(g):
        _accumulate(x, g * mask)

    return Tensor(x.data * mask, x.requires_grad, (x,), back if x.requires_grad else None)


def leaky_relu(x, alpha: float = 0.3) -> Tensor:
    """x for x > 0, alpha * x otherwise."""
    x = _as_tensor(x)
    slope = np.where(x.data > 0, 1.0, alpha)

    def back(g):
        _accumulate(x, g * slope)

    return Tensor(x.data * slope, x.requires_grad, (x,), back if x.requires_grad else None)


def softmax(x) -> Tensor:
    """Row softmax with max-subtraction; rows sum to 1 even for huge logits."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"softmax expects (batch, classes), got {x.data.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        inner = (g * y).sum(axis=1, keepdims=True)
        _accumulate(x, y * (g - inner))

    return Tensor(y, x.requires_grad, (x,), back if x.requires_grad else None)


def dropout(x, rate: float, mode: str, rng: np.random.RandomState) -> Tensor:
    """Inverted dropout: zero units with probability ``rate`` in train mode.

    Infer mode (or rate 0) is the identity and consumes no randomness.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be train or infer, got {mode!r}")
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_tensor(x)
    if mode == "infer" or rate == 0.0:
        return x
    keep = (rng.random_sample(x.data.shape) >= rate) / (1.0 - rate)

    def back(g):
        _accumulate(x, g * keep)

    return Tensor(x.data * keep, x.requires_grad, (x,), back if x.requires_grad else None)


# ---------------------------------------------------------------------------
# losses and lookups
# ---------------------------------------------------------------------------


def embedding_lookup(table, indices) -> Tensor:
    """Gather rows of a (V, D) table by an integer index vector."""
    table = _as_tensor(table)
    idx = np.asarray(indices)
    if idx.ndim != 1:
        raise ShapeError(f"indices must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeError(f"index out of range for table of {table.data.shape[0]} rows")

    def back(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)
        if isinstance(table, Parameter):
            table.grad_ready = True

    return Tensor(table.data[idx], table.requires_grad, (table,), back if table.requires_grad else None)


def cross_entropy(probs, targets) -> Tensor:
    """Mean over the batch of -ln p(target); logs floored at 1e-12.

    ``probs`` rows must already be a distribution (softmax output).
    """
    probs = _as_tensor(probs)
    t = np.asarray(targets)
    if probs.data.ndim != 2 or t.ndim != 1 or t.shape[0] != probs.data.shape[0]:
        raise ShapeError(f"cross_entropy shapes probs={probs.data.shape} targets={t.shape}")
    if t.size and (t.min() < 0 or t.max() >= probs.data.shape[1]):
        raise ShapeError(f"target index out of range for {probs.data.shape[1]} classes")
    batch = probs.data.shape[0]
    picked = probs.data[np.arange(batch), t]
    loss = -np.log(np.maximum(picked, LOG_EPS)).mean()

    def back(g):
        dp = np.zeros_like(probs.data)
        live = picked > LOG_EPS
        dp[np.arange(batch), t] = np.where(live, -1.0 / np.maximum(picked, LOG_EPS), 0.0)
        _accumulate(probs, dp * (float(g) / batch))

    return Tensor(loss, probs.requires_grad, (probs,), back if probs.requires_grad else None)


def binary_cross_entropy(probs, targets) -> Tensor:
    """Mean per-label BCE for multilabel outputs already squashed to (0, 1)."""
    probs = _as_tensor(probs)
    y = np.asarray(targets, dtype=np.float64)
    if probs.data.shape != y.shape:
        raise ShapeError(f"bce shapes probs={probs.data.shape} targets={y.shape}")
    p = np.clip(probs.data, LOG_EPS, 1.0 - LOG_EPS)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean()

    def back(g):
        inside = (probs.data > LOG_EPS) & (probs.data < 1.0 - LOG_EPS)
        dp = np.where(inside, (p - y) / (p * (1.0 - p)), 0.0)
        _accumulate(probs, dp * (float(g) / y.size))

    return Tensor(loss, probs.requires_grad, (probs,), back if probs.requires_grad else None)


def batch_norm_train(x, gamma, beta, eps: float = 1e-5):
    """Normalize by batch statistics; returns (y, batch_mean, batch_var).

    Biased variance, matching the running-statistics update. Gradient flows
    through the statistics (the full batch-norm backward).
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.data.ndim != 2:
        raise ShapeError(f"batch_norm expects (batch, features), got {x.data.shape}")
    n = x.data.shape[0]
    if n < 2:
        raise ShapeError("train-mode batch norm needs a batch of at least 2")
    mean = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    y = gamma.data * xhat + beta.data
    out_req = x.requires_grad or gamma.requires_grad or beta.requires_grad

    def back(g):
        _accumulate(gamma, (g * xhat).sum(axis=0))
        _accumulate(beta, g.sum(axis=0))
        if x.requires_grad:
            gxh = g * gamma.data
            dx = (inv_std / n) * (n * gxh - gxh.sum(axis=0) - xhat * (gxh * xhat).sum(axis=0))
            _accumulate(x, dx)

    out = Tensor(y, out_req, (x, gamma, beta), back if out_req else None)
    return out, mean, var


def batch_norm_infer(x, gamma, beta, running_mean, running_var, eps: float = 1e-5) -> Tensor:
    """Normalize by frozen running statistics (deterministic)."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    inv_std = 1.0 / np.sqrt(running_var + eps)
    y = gamma.data * (x.data - running_mean) * inv_std + beta.data
    out_req = x.requires_grad or gamma.requires_grad or beta.requires_grad

    def back(g):
        xhat = (x.data - running_mean) * inv_std
        _accumulate(gamma, (g * xhat).sum(axis=0))
        _accumulate(beta, g.sum(axis=0))
        _accumulate(x, g * gamma.data * inv_std)

    return Tensor(y, out_req, (x, gamma, beta), back if out_req else None)
