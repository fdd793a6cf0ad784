"""Dense matrices, sparse adjacencies, and a deterministic RNG.

Matrices are plain 2-D float64 numpy arrays. Adjacencies are immutable CSR
structures; the propagation operators derived from them are memoised on the
instance because graphs are revisited every epoch.
"""

import numpy as np

from . import _kernels
from .errors import DomainError, ShapeError


def as_matrix(values) -> np.ndarray:
    """Coerce to a contiguous 2-D float64 array."""
    a = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def col_stats(x: np.ndarray) -> tuple[float, float]:
    """Mean and population standard deviation over all entries of ``x``."""
    if x.size == 0:
        raise DomainError("statistics of an empty matrix are undefined")
    return float(np.mean(x)), float(np.std(x))


class SparseAdj:
    """Weighted sparse adjacency in CSR form. Immutable once constructed."""

    __slots__ = ("n", "indptr", "indices", "weights", "symmetric", "_norm_cache")

    def __init__(self, n, indptr, indices, weights, symmetric=True, validate=True):
        self.n = int(n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self.symmetric = bool(symmetric)
        self._norm_cache = {}
        if validate:
            self._validate()

    def _validate(self):
        if self.indptr.shape[0] != self.n + 1 or self.indptr[0] != 0:
            raise ShapeError(f"bad indptr for {self.n} nodes")
        if self.indices.shape[0] != self.weights.shape[0] or (
            self.indices.shape[0] and int(self.indptr[-1]) != self.indices.shape[0]
        ):
            raise ShapeError("indices/weights length mismatch")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.n):
            raise ShapeError(f"neighbor index out of range for n={self.n}")
        seen = set()
        for i in range(self.n):
            for e in range(self.indptr[i], self.indptr[i + 1]):
                key = (i, int(self.indices[e]))
                if key in seen:
                    raise ShapeError(f"duplicate entry {key}")
                seen.add(key)
        if self.symmetric:
            entries = {}
            for i in range(self.n):
                for e in range(self.indptr[i], self.indptr[i + 1]):
                    entries[(i, int(self.indices[e]))] = float(self.weights[e])
            for (i, j), w in entries.items():
                if entries.get((j, i)) != w:
                    raise ShapeError(f"asymmetric entry ({i},{j})")

    @classmethod
    def from_edges(cls, n, edges, weights=None, symmetric=True):
        """Build from (i, j) pairs; symmetric graphs get both directions stored."""
        pairs = {}
        for k, (i, j) in enumerate(edges):
            w = 1.0 if weights is None else float(weights[k])
            pairs[(int(i), int(j))] = w
            if symmetric:
                pairs[(int(j), int(i))] = w
        counts = np.zeros(n, dtype=np.int64)
        for i, _ in pairs:
            counts[i] += 1
        indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        indices = np.empty(len(pairs), dtype=np.int64)
        vals = np.empty(len(pairs), dtype=np.float64)
        cursor = indptr[:-1].copy()
        for (i, j) in sorted(pairs):
            indices[cursor[i]] = j
            vals[cursor[i]] = pairs[(i, j)]
            cursor[i] += 1
        return cls(n, indptr, indices, vals, symmetric=symmetric, validate=False)

    @classmethod
    def empty(cls, n):
        return cls(n, np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=np.int64),
                   np.empty(0, dtype=np.float64), validate=False)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=np.float64)
        for i in range(self.n):
            for e in range(self.indptr[i], self.indptr[i + 1]):
                out[i, self.indices[e]] = self.weights[e]
        return out

    def degrees(self) -> np.ndarray:
        """Unweighted degree (stored-entry count) per node."""
        return np.diff(self.indptr)

    def edge_set(self):
        """Set of (i, j) stored entries; handy for oracles."""
        out = set()
        for i in range(self.n):
            for e in range(self.indptr[i], self.indptr[i + 1]):
                out.add((i, int(self.indices[e])))
        return out

    def normalized(self, self_weight=2.0, symmetric_norm=True):
        """Propagation operator CSR (indptr, indices, w, w_t), memoised."""
        key = (float(self_weight), bool(symmetric_norm))
        hit = self._norm_cache.get(key)
        if hit is None:
            hit = _kernels.gcn_norm(self.indptr, self.indices, self.weights,
                                    float(self_weight), bool(symmetric_norm))
            self._norm_cache[key] = hit
        return hit

    def induced(self, kept) -> "SparseAdj":
        """Subgraph on ``kept`` original node ids (must be ascending)."""
        kept = np.ascontiguousarray(kept, dtype=np.int64)
        indptr, indices, weights = _kernels.induced_subgraph(
            self.indptr, self.indices, self.weights, kept)
        return SparseAdj(kept.shape[0], indptr, indices, weights,
                         symmetric=self.symmetric, validate=False)


def spmm(adj: SparseAdj, x: np.ndarray) -> np.ndarray:
    if adj.n != x.shape[0]:
        raise ShapeError(f"adjacency has {adj.n} nodes but features have {x.shape[0]} rows")
    return _kernels.spmm(adj.indptr, adj.indices, adj.weights, x)


class Rng:
    """Seed-keyed RNG with platform-stable streams.

    Sub-streams are derived with ``derive(*key)``; the same (seed, key) always
    yields the same sequence, so experiments are reproducible end to end.
    """

    def __init__(self, seed: int, _key: tuple = ()):
        self.seed = int(seed)
        self._key = tuple(int(k) for k in _key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self._key)))

    def derive(self, *key: int) -> "Rng":
        return Rng(self.seed, self._key + tuple(key))

    def normal(self, rows: int, cols: int, std: float) -> np.ndarray:
        if std < 0:
            raise DomainError("std must be non-negative")
        if std == 0:
            return np.zeros((rows, cols), dtype=np.float64)
        return self._gen.normal(0.0, std, size=(rows, cols))

    def uniform(self, rows: int, cols: int, bound: float) -> np.ndarray:
        if bound < 0:
            raise DomainError("bound must be non-negative")
        if bound == 0:
            return np.zeros((rows, cols), dtype=np.float64)
        return self._gen.uniform(-bound, bound, size=(rows, cols))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low, high=None) -> int:
        return int(self._gen.integers(low, high))


def rng_normal(rng: Rng, rows: int, cols: int, std: float) -> np.ndarray:
    return rng.normal(rows, cols, std)


def rng_uniform(rng: Rng, rows: int, cols: int, bound: float) -> np.ndarray:
    return rng.uniform(rows, cols, bound)
