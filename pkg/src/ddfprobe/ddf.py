"""Differentiable Disentanglement Filter.

A frozen, randomly initialised ``linear -> ReLU -> linear`` block with
equal input and output width ``d`` and ``n`` hidden ReLU units. The input
layer carries strictly negative biases, so the ReLU only fires on inputs
that correlate with a unit's random weight vector above the noise floor.
The output layer has no bias, which keeps ``ddf(0) == 0``.

Nothing here is ever trained; gradients flow through the block to
whatever sits in front of it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError

DEFAULT_BIAS_RANGE = (-0.10, -0.01)


@dataclass(frozen=True)
class DDFLayer:
    d: int
    n: int
    w1: T.Parameter  # n x d
    b1: T.Parameter  # n
    w2: T.Parameter  # d x n
    seed: int
    bias_low: float = DEFAULT_BIAS_RANGE[0]
    bias_high: float = DEFAULT_BIAS_RANGE[1]

    @property
    def parameters(self):
        return [self.w1, self.b1, self.w2]

    def config(self):
        return {
            "d": self.d,
            "n": self.n,
            "seed": self.seed,
            "bias_low": self.bias_low,
            "bias_high": self.bias_high,
        }

    def checksum(self):
        return parameter_checksum(self.parameters)

    def __call__(self, x):
        return ddf_forward(self, x)


def parameter_checksum(params):
    """SHA-256 over names, shapes and little-endian float64 bytes."""
    h = hashlib.sha256()
    for p in params:
        h.update(p.name.encode())
        h.update(repr(p.shape).encode())
        h.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return h.hexdigest()


BALANCE_RANGE = (0.3, 0.7)
BALANCE_MIN_WIDTH = 16


def _balanced(rows):
    frac = (rows > 0).mean(axis=1)
    return (frac >= BALANCE_RANGE[0]) & (frac <= BALANCE_RANGE[1])


def _rebalance_rows(w, std, rng):
    """Redraw, in place, rows whose share of positive weights is lopsided.

    Gaussian draws are bipolar on average but a short row can still come
    out mostly one-signed; such rows are resampled from the same generator
    until balanced. Rows shorter than ``BALANCE_MIN_WIDTH`` are left alone.
    """
    if w.shape[1] < BALANCE_MIN_WIDTH:
        return
    bad = np.flatnonzero(~_balanced(w))
    while bad.size:
        w[bad] = rng.normal(0.0, std, size=(bad.size, w.shape[1]))
        bad = bad[~_balanced(w[bad])]


def ddf_init(d, n, seed, bias_low=DEFAULT_BIAS_RANGE[0], bias_high=DEFAULT_BIAS_RANGE[1]):
    """Build a frozen DDF with Kaiming-normal weights and negative biases.

    Parameters
    ----------
    d : int
        Input and output width.
    n : int
        Number of hidden ReLU units.
    seed : int
        Sole source of randomness; the layer is a pure function of
        ``(d, n, seed, bias_low, bias_high)``.
    bias_low, bias_high : float
        Hidden biases are drawn uniformly from ``[bias_low, bias_high]``,
        which must satisfy ``bias_low < bias_high < 0``.
    """
    if d < 1 or n < 1:
        raise ContractError(f"DDF widths must be positive, got d={d}, n={n}")
    if not bias_low < bias_high < 0:
        raise ContractError(
            f"DDF bias bounds must satisfy low < high < 0, got [{bias_low}, {bias_high}]"
        )
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / d), size=(n, d))
    w2 = rng.normal(0.0, np.sqrt(2.0 / n), size=(d, n))
    b1 = rng.uniform(bias_low, bias_high, size=n)
    # uniform() may return the upper bound; keep the strict inequality.
    b1 = np.minimum(b1, np.nextafter(0.0, -1.0))
    _rebalance_rows(w1, np.sqrt(2.0 / d), rng)
    _rebalance_rows(w2, np.sqrt(2.0 / n), rng)
    return DDFLayer(
        d=int(d),
        n=int(n),
        w1=T.Parameter(w1, name="ddf.w1", frozen=True),
        b1=T.Parameter(b1, name="ddf.b1", frozen=True),
        w2=T.Parameter(w2, name="ddf.w2", frozen=True),
        seed=int(seed),
        bias_low=float(bias_low),
        bias_high=float(bias_high),
    )


def _check_width(layer, x):
    if len(x.shape) != 2 or x.shape[1] != layer.d:
        raise DimensionError(f"DDF expects input of shape (batch, {layer.d}), got {x.shape}")


def ddf_hidden(layer, x):
    """Post-ReLU hidden activations, shape (batch, n)."""
    x = T.as_tensor(x)
    _check_width(layer, x)
    return T.relu(T.add(T.matmul(x, layer.w1.T), layer.b1))


def _output(layer, hidden):
    return T.matmul(hidden, layer.w2.T)


def ddf_forward(layer, x):
    return _output(layer, ddf_hidden(layer, x))


def ddf_forward_with_override(layer, x, neuron, delta):
    """Forward pass with ``delta`` added to one hidden unit after the ReLU.

    The shifted value is not clamped again, so negative deltas can push a
    unit below zero. Because the output layer is linear, the result is the
    plain forward output plus ``delta * w2[:, neuron]``; it is computed in
    that form so ``delta == 0`` reproduces ``ddf_forward`` bit for bit.
    """
    if not 0 <= neuron < layer.n:
        raise ContractError(f"neuron index {neuron} outside [0, {layer.n})")
    base = ddf_forward(layer, x).data
    return T.Tensor(shift_output(layer, base, neuron, delta))


def shift_output(layer, base_output, neuron, delta):
    """``base_output`` moved by ``delta`` along output column ``neuron``."""
    if delta == 0:
        return np.array(base_output, dtype=np.float64)
    return base_output + delta * layer.w2.data[:, neuron]


def offset_unit(activations, neuron, delta):
    """Copy of ``activations`` with ``delta`` added to column ``neuron``."""
    out = np.array(activations, dtype=np.float64)
    out[:, neuron] += delta
    return out
