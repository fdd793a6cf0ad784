"""Differentiable building blocks with hand-derived backward passes.

Every layer caches what its backward pass needs during forward; a layer
instance is therefore single-owner within a training step. Gradients are
exact (checked against central finite differences in the test suite).
"""

import math

import numpy as np

from . import _kernels
from .errors import DomainError, ShapeError, StateError
from .numcore import SparseAdj

PNORM_EPS = 1e-12  # guards the projection-vector norm in top-k scoring
SELF_LOOP_WEIGHT = 2.0  # improved-GCN self-loop weight


def relu(x):
    return np.maximum(x, 0.0)


class GcnLayer:
    """Graph convolution with weighted self-loops and degree normalisation.

    Propagates features with P built from the adjacency plus self-loops of
    weight 2, then applies an affine map and optional ReLU. ``scale`` divides
    the pre-activation; the variance re-initialisation pass folds its divisor
    into W and b instead, so scale normally stays 1.
    """

    def __init__(self, w, b, activation="relu", scale=1.0, norm="sym"):
        if activation not in ("relu", "none"):
            raise ValueError(f"unknown activation {activation!r}")
        if norm not in ("sym", "row"):
            raise ValueError(f"unknown normalisation {norm!r}")
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.w = np.asarray(w, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64).reshape(-1)
        self.activation = activation
        self.scale = float(scale)
        self.norm = norm
        self._cache = None

    @property
    def fan_in(self):
        return self.w.shape[0]

    @property
    def fan_out(self):
        return self.w.shape[1]

    def forward(self, adj: SparseAdj, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.w.shape[0]:
            raise ShapeError(
                f"gcn expects {self.w.shape[0]} input features, got {x.shape[1]}")
        indptr, indices, w_p, w_pt = adj.normalized(
            SELF_LOOP_WEIGHT, symmetric_norm=(self.norm == "sym"))
        m = _kernels.spmm(indptr, indices, w_p, x)
        pre = (m @ self.w) / self.scale + self.b
        out = relu(pre) if self.activation == "relu" else pre
        self._cache = {"m": m, "pre": pre, "prop_t": (indptr, indices, w_pt)}
        return out

    def backward(self, grad_out: np.ndarray):
        if self._cache is None:
            raise StateError("gcn backward called before forward")
        c = self._cache
        grad_pre = grad_out * (c["pre"] > 0) if self.activation == "relu" else grad_out
        grad_b = grad_pre.sum(axis=0)
        grad_w = (c["m"].T @ grad_pre) / self.scale
        grad_m = (grad_pre @ self.w.T) / self.scale
        indptr, indices, w_pt = c["prop_t"]
        grad_x = _kernels.spmm(indptr, indices, w_pt, grad_m)
        return grad_x, {"W": grad_w, "b": grad_b}

    @property
    def last_preactivation(self):
        if self._cache is None:
            raise StateError("no cached forward state")
        return self._cache["pre"]


def keep_count(k: float, n: int) -> int:
    """Nodes retained by a top-k pool: max(1, ceil(k*n)), float-dust guarded."""
    return max(1, math.ceil(k * n - 1e-9))


class TopKPool:
    """Node-dropping pool ranked by the normalised projection of features.

    Scores are the projection of each feature row onto ``p`` divided by the
    norm of ``p``; the highest-scoring max(1, ceil(k*N)) nodes survive (ties
    broken toward lower node index) and their features are gated by the tanh
    of their score. The selection itself is treated as constant in backward;
    gradients flow through the feature term and the gate, including the
    gate's dependence on features and on ``p``.
    """

    def __init__(self, p, k=0.8, scale=1.0):
        if not (0 <= k < 1):
            raise ValueError("k must lie in [0, 1)")
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.p = np.asarray(p, dtype=np.float64).reshape(-1)
        self.k = float(k)
        self.scale = float(scale)
        self._cache = None

    def forward(self, adj: SparseAdj, x: np.ndarray):
        if x.shape[1] != self.p.shape[0]:
            raise ShapeError(
                f"pool projection has {self.p.shape[0]} entries, features have {x.shape[1]}")
        nrm = float(np.linalg.norm(self.p))
        denom = max(nrm, PNORM_EPS)
        scores = (x @ self.p) / denom
        m = keep_count(self.k, x.shape[0])
        # stable argsort on -scores breaks ties toward lower node index
        ranked = np.argsort(-scores, kind="stable")
        kept = np.sort(ranked[:m])
        gate = np.tanh(scores[kept])
        x_kept = x[kept]
        out = (x_kept * gate[:, None]) / self.scale
        sub = adj.induced(kept)
        self._cache = {"x": x, "kept": kept, "gate": gate, "x_kept": x_kept,
                       "scores": scores, "norm": nrm, "denom": denom}
        return sub, out, kept

    def backward(self, grad_out: np.ndarray):
        if self._cache is None:
            raise StateError("top-k backward called before forward")
        c = self._cache
        kept, gate, x_kept = c["kept"], c["gate"], c["x_kept"]
        denom = c["denom"]
        phat = self.p / denom
        # d out / d gate, chained through tanh
        g_dot_x = np.einsum("ij,ij->i", grad_out, x_kept) / self.scale
        d_score = g_dot_x * (1.0 - gate * gate)
        grad_in = np.zeros_like(c["x"])
        grad_in[kept] = grad_out * gate[:, None] / self.scale + np.outer(d_score, phat)
        if c["norm"] >= PNORM_EPS:
            # quotient rule: d score_i / d p = (x_i - score_i * phat) / |p|
            grad_p = (x_kept.T @ d_score - float(d_score @ c["scores"][kept]) * phat) / denom
        else:
            grad_p = (x_kept.T @ d_score) / denom
        return grad_in, {"p": grad_p}


class DenseLayer:
    """Affine map plus optional ReLU."""

    def __init__(self, w, b, activation="relu"):
        if activation not in ("relu", "none"):
            raise ValueError(f"unknown activation {activation!r}")
        self.w = np.asarray(w, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64).reshape(-1)
        self.activation = activation
        self._cache = None

    @property
    def fan_in(self):
        return self.w.shape[0]

    @property
    def fan_out(self):
        return self.w.shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.w.shape[0]:
            raise ShapeError(
                f"dense expects {self.w.shape[0]} inputs, got {x.shape[1]}")
        pre = x @ self.w + self.b
        out = relu(pre) if self.activation == "relu" else pre
        self._cache = {"x": x, "pre": pre}
        return out

    def backward(self, grad_out: np.ndarray):
        if self._cache is None:
            raise StateError("dense backward called before forward")
        c = self._cache
        grad_pre = grad_out * (c["pre"] > 0) if self.activation == "relu" else grad_out
        grad_b = grad_pre.sum(axis=0)
        grad_w = c["x"].T @ grad_pre
        grad_x = grad_pre @ self.w.T
        return grad_x, {"W": grad_w, "b": grad_b}


READOUT_KINDS = ("mean", "sum", "max", "max_and_sum")


class Readout:
    """Permutation-invariant reduction of node rows to one graph vector."""

    def __init__(self, kind: str):
        if kind not in READOUT_KINDS:
            raise ValueError(f"unknown readout {kind!r}")
        self.kind = kind
        self._cache = None

    def width(self, feature_dim: int) -> int:
        return 2 * feature_dim if self.kind == "max_and_sum" else feature_dim

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] < 1:
            raise DomainError("readout of an empty matrix")
        self._cache = {"rows": x.shape[0]}
        if self.kind == "mean":
            return x.mean(axis=0)
        if self.kind == "sum":
            return x.sum(axis=0)
        # ties route the gradient to the lowest row index (argmax does exactly that)
        argmax = np.argmax(x, axis=0)
        self._cache["argmax"] = argmax
        mx = x[argmax, np.arange(x.shape[1])]
        if self.kind == "max":
            return mx
        return np.concatenate([mx, x.sum(axis=0)])

    def backward(self, grad_vec: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("readout backward called before forward")
        n = self._cache["rows"]
        if self.kind == "mean":
            return np.tile(grad_vec / n, (n, 1))
        if self.kind == "sum":
            return np.tile(grad_vec, (n, 1))
        f = self._cache["argmax"].shape[0]
        out = np.zeros((n, f), dtype=np.float64)
        if self.kind == "max":
            out[self._cache["argmax"], np.arange(f)] = grad_vec
            return out
        out[self._cache["argmax"], np.arange(f)] = grad_vec[:f]
        out += grad_vec[f:]
        return out


def readout(kind: str, x: np.ndarray) -> np.ndarray:
    """One-shot readout without keeping backward state."""
    return Readout(kind).forward(x)
