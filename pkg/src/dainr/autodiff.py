"""Small define-by-run reverse-mode autodiff over numpy arrays.

Only the operations needed by the reconstruction models are provided. Every
op records its parents and a backward closure on the output ``Tensor``; calling
:func:`backward` on a scalar walks that graph once in reverse topological
order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class Tensor:
    """Dense real array node of the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @classmethod
    def from_op(cls, data, parents: Sequence["Tensor"], backward_fn) -> "Tensor":
        """Wrap the result of an op.

        ``backward_fn(out_grad)`` must return one gradient (or ``None``) per
        parent, each shaped like that parent's data.
        """
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward_fn
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        backward(self)

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

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every leaf that ``loss`` depends on.

    Leaf gradients accumulate, so call ``zero_grad`` on parameters between
    steps.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._backward is None:
        raise RuntimeError("loss was not produced by any recorded operation; nothing to differentiate")

    order = _topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g.astype(node.data.dtype, copy=False)
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), _bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), _bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), _bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        # promote vectors to matrices so the transposes below are well defined
        A = a.data[None, :] if a.data.ndim == 1 else a.data
        B = b.data[:, None] if b.data.ndim == 1 else b.data
        G = g.reshape(A.shape[0], B.shape[1])
        return (G @ B.T).reshape(a.shape), (A.T @ G).reshape(b.shape)

    return Tensor.from_op(a.data @ b.data, (a, b), _bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` fused into one node."""

    def _bw(g):
        grads = [g @ weight.data.T, x.data.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    out = x.data @ weight.data
    parents: tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        out = out + bias.data
        parents = (x, weight, bias)
    return Tensor.from_op(out, parents, _bw)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def _bw(g):
        return (g * (out > 0),)

    return Tensor.from_op(out, (x,), _bw)


def sin(x: Tensor) -> Tensor:
    def _bw(g):
        return (g * np.cos(x.data),)

    return Tensor.from_op(np.sin(x.data), (x,), _bw)


def cos(x: Tensor) -> Tensor:
    def _bw(g):
        return (-g * np.sin(x.data),)

    return Tensor.from_op(np.cos(x.data), (x,), _bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].data.ndim
    edges = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def _bw(g):
        out = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(lo, hi)
            out.append(g[tuple(sl)])
        return out

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=ax), tensors, _bw)


def getitem(x: Tensor, index) -> Tensor:
    def _bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return Tensor.from_op(x.data[index], (x,), _bw)


def reshape(x: Tensor, shape) -> Tensor:
    def _bw(g):
        return (g.reshape(x.shape),)

    return Tensor.from_op(x.data.reshape(shape), (x,), _bw)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    def _bw(g):
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)

    return Tensor.from_op(np.asarray(x.data.sum()), (x,), _bw)


def abs_sum(x: Tensor) -> Tensor:
    """L1 norm. The subgradient at exactly zero is taken as 0."""

    def _bw(g):
        return (g * np.sign(x.data),)

    return Tensor.from_op(np.asarray(np.abs(x.data).sum()), (x,), _bw)


def square_sum(x: Tensor) -> Tensor:
    def _bw(g):
        return (2.0 * g * x.data,)

    return Tensor.from_op(np.asarray(np.square(x.data).sum()), (x,), _bw)


def complex_linear(x: Tensor, forward: Callable, adjoint: Callable) -> Tensor:
    """Apply a complex-linear operator to a real two-channel tensor.

    ``x`` has trailing dimension 2 holding (real, imaginary). ``forward`` maps
    a complex array to a complex array, ``adjoint`` is its conjugate
    transpose. The output carries the same two-channel layout.
    """
    z = x.data[..., 0] + 1j * x.data[..., 1]
    y = forward(z)
    out = np.stack([y.real, y.imag], axis=-1).astype(x.dtype, copy=False)

    def _bw(g):
        back = adjoint(g[..., 0] + 1j * g[..., 1])
        return (np.stack([back.real, back.imag], axis=-1).astype(x.dtype, copy=False),)

    return Tensor.from_op(out, (x,), _bw)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamWState:
    """Moment buffers and hyper-parameters of AdamW."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    exp_avg: list[np.ndarray] = field(default_factory=list)
    exp_avg_sq: list[np.ndarray] = field(default_factory=list)


def adamw_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamWState) -> None:
    """Update ``params`` in place with one decoupled-weight-decay Adam step.

    Raises ``FloatingPointError`` without touching anything if a gradient is
    not finite.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"parameter {i}: shape {p.shape} does not match gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {i}; step aborted")
    if not state.exp_avg:
        state.exp_avg = [np.zeros_like(p) for p in params]
        state.exp_avg_sq = [np.zeros_like(p) for p in params]

    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.exp_avg, state.exp_avg_sq):
        if state.weight_decay:
            p *= 1.0 - state.lr * state.weight_decay
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v / bc2) + state.eps
        p -= (state.lr / bc1) * m / denom


class AdamW:
    """AdamW over a list of trainable tensors."""

    def __init__(self, params: Iterable[Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = [p for p in params if p.requires_grad]
        self.state = AdamWState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adamw_step([p.data for p in self.params], grads, self.state)
