"""Hyperdimensional computing with dense bipolar hypervectors.

Random bipolar vectors of large dimension are nearly orthogonal to each
other. Bundling (elementwise sum) keeps similarity to every summand,
binding (elementwise product) produces a vector dissimilar to both inputs
and is its own inverse for bipolar operands. Together they store a set of
key/value pairs, i.e. a graph's edge list, in one vector:

>>> k, v = random_bipolar(1000, seed=1), random_bipolar(1000, seed=2)
>>> g = encode_pairs([(k, v)])
>>> bool(np.array_equal(bind(g, k).values, v.values))
True
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError

BIPOLAR = "bipolar"
REAL = "real"


@dataclass(frozen=True, eq=False)
class HyperVector:
    values: np.ndarray
    kind: str = REAL

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise ContractError("hypervector dimension must be positive")
        if self.kind not in (BIPOLAR, REAL):
            raise ContractError(f"unknown hypervector kind {self.kind!r}")
        if self.kind == BIPOLAR and not np.all(np.abs(arr) == 1.0):
            raise ContractError("bipolar hypervector entries must be -1 or +1")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self):
        return self.values.size

    def __neg__(self):
        return HyperVector(-self.values, self.kind)

    def __eq__(self, other):
        return (
            isinstance(other, HyperVector)
            and self.kind == other.kind
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class Codebook:
    """Labelled reference vectors for nearest-cosine clean-up."""

    labels: tuple
    vectors: tuple
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels, vectors = tuple(self.labels), tuple(self.vectors)
        if not labels or len(labels) != len(vectors):
            raise ContractError("codebook needs one vector per label and at least one entry")
        if len(set(labels)) != len(labels):
            raise ContractError("codebook labels must be unique")
        dims = {v.dim for v in vectors}
        kinds = {v.kind for v in vectors}
        if len(dims) != 1 or len(kinds) != 1:
            raise ContractError("codebook entries must share dimension and kind")
        matrix = np.stack([v.values for v in vectors])
        matrix.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_matrix", matrix)

    @classmethod
    def from_pairs(cls, entries):
        entries = list(entries)
        return cls(tuple(l for l, _ in entries), tuple(v for _, v in entries))

    @property
    def dim(self):
        return self._matrix.shape[1]

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, label):
        return self.vectors[self.labels.index(label)]

    def similarities(self, v):
        """Cosine of ``v`` against every entry, in codebook order."""
        _check_dims(self.dim, v.dim)
        norm_v = _norm(v)
        norms = np.linalg.norm(self._matrix, axis=1)
        if np.any(norms == 0):
            raise ContractError("codebook contains a zero vector")
        return (self._matrix @ v.values) / (norms * norm_v)


def _check_dims(da, db):
    if da != db:
        raise DimensionError(f"hypervector dimensions differ: {da} vs {db}")


def _norm(v):
    n = float(np.linalg.norm(v.values))
    if n == 0.0:
        raise ContractError("cosine is undefined for the zero vector")
    return n


def random_bipolar(d, seed):
    """Draw ``d`` independent fair +/-1 entries from a generator seeded by ``seed``."""
    if d < 1:
        raise ContractError(f"dimension must be >= 1, got {d}")
    bits = np.random.default_rng(seed).integers(0, 2, size=d)
    return HyperVector(2.0 * bits - 1.0, BIPOLAR)


def random_codebook(labels, d, seed):
    """Codebook of independent random bipolar vectors, one per label."""
    labels = list(labels)
    if d < 1:
        raise ContractError(f"dimension must be >= 1, got {d}")
    bits = np.random.default_rng(seed).integers(0, 2, size=(len(labels), d))
    vectors = [HyperVector(2.0 * row - 1.0, BIPOLAR) for row in bits]
    return Codebook(tuple(labels), tuple(vectors))


def cosine(a, b):
    _check_dims(a.dim, b.dim)
    c = float(a.values @ b.values) / (_norm(a) * _norm(b))
    return min(1.0, max(-1.0, c))


def bundle(vs):
    vs = list(vs)
    if not vs:
        raise ContractError("cannot bundle an empty list")
    for v in vs[1:]:
        _check_dims(vs[0].dim, v.dim)
    if len(vs) == 1:
        return HyperVector(vs[0].values, REAL)
    return HyperVector(np.sum([v.values for v in vs], axis=0), REAL)


def bind(a, b):
    """Hadamard product; bipolar in, bipolar out."""
    _check_dims(a.dim, b.dim)
    kind = BIPOLAR if a.kind == BIPOLAR and b.kind == BIPOLAR else REAL
    return HyperVector(a.values * b.values, kind)


def encode_pairs(pairs):
    """Superpose bind(key, value) over all pairs into a single vector."""
    pairs = list(pairs)
    if not pairs:
        raise ContractError("cannot encode an empty pair list")
    for key, value in pairs:
        if key.kind != BIPOLAR or value.kind != BIPOLAR:
            raise ContractError("encode_pairs expects bipolar keys and values")
    # Integer-valued sums are exact in float64, so pair order cannot matter.
    return bundle([bind(k, v) for k, v in pairs])


def nearest(codebook, v):
    """Index and cosine of the closest codebook entry (lowest index on ties)."""
    sims = codebook.similarities(v)
    idx = int(np.argmax(sims))
    return idx, float(sims[idx])


def decode_value(g, key, codebook, threshold):
    """Unbind ``key`` from ``g`` and clean the result up against ``codebook``.

    Returns the best-matching label, or ``None`` when its cosine falls
    below ``threshold``.
    """
    _check_dims(g.dim, key.dim)
    idx, score = nearest(codebook, bind(g, key))
    return codebook.labels[idx] if score >= threshold else None
