"""Minimal dense-tensor reverse-mode autodiff on top of numpy.

Only the primitives the host network and the DDF need are provided:
matmul, add/mul (with broadcast over the leading batch axis), relu,
sigmoid, mean-squared error, reshape, transpose and concatenate.
Everything is float64.
"""

from __future__ import annotations

import contextlib
import contextvars

import numpy as np

from . import _kernels
from .errors import ContractError, DimensionError

_recording = contextvars.ContextVar("ddfprobe_recording", default=True)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph (reentrant, per-context)."""
    token = _recording.set(False)
    try:
        yield
    finally:
        _recording.reset(token)


class Tensor:
    """A float64 array that remembers how it was computed.

    Parameters
    ----------
    data : array_like
        Values; always copied into a fresh float64 array.
    requires_grad : bool
        Whether ``backward`` should populate ``grad`` for this tensor.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data, parents, backward):
        out = cls.__new__(cls)
        out.data = np.asarray(data)  # 0-d results come back as numpy scalars
        out.grad = None
        track = _recording.get() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = parents if track else ()
        out._backward = backward if track else None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class Parameter(Tensor):
    """A named leaf tensor that an optimizer may update.

    Frozen parameters still take part in forward and backward passes (they
    can even hold a gradient) but optimizers never touch them; their buffer
    is made read-only so accidental in-place writes fail loudly.
    """

    __slots__ = ("frozen", "name")

    def __init__(self, data, name="", frozen=False):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.frozen = bool(frozen)
        if self.frozen:
            self.data.flags.writeable = False

    @property
    def tensor(self):
        return self

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, frozen={self.frozen})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _broadcast_kind(a_shape, b_shape, opname):
    if a_shape == b_shape:
        return "same"
    if len(a_shape) == 0 or len(b_shape) == 0:
        return "scalar"
    if len(a_shape) == len(b_shape) + 1 and a_shape[1:] == b_shape:
        return "b_over_batch"
    if len(b_shape) == len(a_shape) + 1 and b_shape[1:] == a_shape:
        return "a_over_batch"
    raise DimensionError(f"{opname}: incompatible shapes {a_shape} and {b_shape}")


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum())
    return grad.sum(axis=0)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out_data = a.data @ b.data

    def _backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        # Computed as (g^T a)^T: when b is a transposed weight, the gradient
        # that reaches the weight itself is then C-contiguous.
        gb = (g.T @ a.data).T if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(out_data, (a, b), _backward)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_kind(a.shape, b.shape, "add")
    out_data = a.data + b.data

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(out_data, (a, b), _backward)


def mul(a, b):
    """Elementwise product."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_kind(a.shape, b.shape, "mul")
    out_data = a.data * b.data

    def _backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(out_data, (a, b), _backward)


def relu(x):
    """max(0, x); the subgradient at exactly 0 is 0."""
    x = as_tensor(x)
    mask = x.data > 0.0
    out_data = np.where(mask, x.data, 0.0)

    def _backward(g):
        return (g * mask,)

    return Tensor._from_op(out_data, (x,), _backward)


def sigmoid(x):
    x = as_tensor(x)
    # Split by sign so exp never overflows.
    z = x.data
    e = np.exp(-np.abs(z))
    out_data = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def _backward(g):
        return (g * out_data * (1.0 - out_data),)

    return Tensor._from_op(out_data, (x,), _backward)


def mse_loss(pred, target):
    """Mean over all elements of (pred - target)**2, as a scalar tensor."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss: shapes {pred.shape} and {target.shape} differ")
    diff = pred.data - target.data
    out_data = np.asarray(np.mean(diff * diff))
    scale = 2.0 / diff.size

    def _backward(g):
        gd = g * scale * diff
        return gd, -gd

    return Tensor._from_op(out_data, (pred, target), _backward)


def reshape(x, shape):
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        out_data = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}") from exc

    def _backward(g):
        return (g.reshape(x.shape),)

    return Tensor._from_op(out_data, (x,), _backward)


def transpose(x):
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {x.shape}")

    def _backward(g):
        return (g.T,)

    return Tensor._from_op(x.data.T, (x,), _backward)


def concatenate(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concatenate needs at least one tensor")
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concatenate: incompatible shapes {shapes}") from exc
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(out_data, tuple(tensors), _backward)


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
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
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss):
    """Populate ``grad`` on every requires_grad tensor feeding ``loss``.

    Gradients are added to whatever is already stored, so repeated calls
    accumulate until an optimizer step (or ``zero_grad``) clears them.
    Stored gradients may share memory with each other and are read-only.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        g = np.asarray(g)
        g.flags.writeable = False
        node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


class SGD:
    """Gradient descent with optional heavy-ball momentum.

    Frozen parameters are skipped. All gradients are cleared after a step.
    """

    def __init__(self, params, lr, momentum=0.0):
        if lr < 0:
            raise ContractError(f"learning rate must be non-negative, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ContractError(f"momentum must lie in [0, 1), got {momentum}")
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._velocity = {}

    def step(self):
        for p in self.params:
            if p.frozen:
                continue
            if p.grad is None:
                raise ContractError(f"parameter {p.name!r} has no gradient")
        for p in self.params:
            if p.frozen:
                continue
            if self.momentum:
                v = self._velocity.get(id(p))
                if v is None:
                    v = self._velocity[id(p)] = np.array(p.grad)
                else:
                    v *= self.momentum
                    v += p.grad
                p.data -= self.lr * v
            else:
                p.data -= self.lr * p.grad
        self.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Adam:
    """Adam with bias correction; frozen parameters are skipped.

    The moment buffers hold ``m / (1 - beta1)`` and ``v / (1 - beta2)``; the
    constant factors are folded into the step size and epsilon, so the update
    is algebraically the usual bias-corrected Adam. ``fused=False`` uses the
    plain numpy kernel, which gives bitwise identical results. Gradients are
    cleared after each step.
    """

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, fused=True):
        if lr < 0:
            raise ContractError(f"learning rate must be non-negative, got {lr}")
        if not all(0.0 <= b < 1.0 for b in betas):
            raise ContractError(f"Adam betas must lie in [0, 1), got {betas}")
        self.params = list(params)
        self.lr = float(lr)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.t = 0
        self._state = {}
        self._update = _kernels.adam_update if fused else _kernels.adam_update_reference

    def step(self):
        for p in self.params:
            if not p.frozen and p.grad is None:
                raise ContractError(f"parameter {p.name!r} has no gradient")
        self.t += 1
        b1, b2 = self.betas
        bc1, bc2 = 1.0 - b1**self.t, 1.0 - b2**self.t
        c = np.sqrt((1.0 - b2) / bc2)
        scale = self.lr * (1.0 - b1) / (bc1 * c)
        eps = self.eps / c
        for p in self.params:
            if p.frozen:
                continue
            state = self._state.get(id(p))
            if state is None:
                state = self._state[id(p)] = tuple(np.zeros_like(p.data) for _ in range(3))
            m, v, tmp = state
            self._update(p.data, p.grad, m, v, tmp, b1, b2, scale, eps)
        self.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def optimizer_step(params, learning_rate):
    """One plain gradient-descent step over ``params``."""
    if learning_rate <= 0:
        raise ContractError(f"learning rate must be positive, got {learning_rate}")
    SGD(params, learning_rate).step()
