"""Micro-benchmark comparing the numba and pure-numpy kernel paths."""

import time

import numpy as np

from . import _kernels
from .numcore import Rng, SparseAdj


def random_csr(nodes: int, avg_degree: int, seed: int = 0) -> SparseAdj:
    rng = Rng(seed)
    edges = set()
    target = nodes * avg_degree // 2
    while len(edges) < target:
        i = rng.integers(0, nodes)
        j = rng.integers(0, nodes)
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return SparseAdj.from_edges(nodes, edges)


def _time(fn, args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(nodes: int = 2000, features: int = 64, avg_degree: int = 8,
              repeats: int = 5, seed: int = 0) -> list:
    """Time each kernel on both paths; returns rows of result dicts."""
    adj = random_csr(nodes, avg_degree, seed)
    x = Rng(seed).normal(nodes, features, 1.0)
    kept = np.sort(Rng(seed).permutation(nodes)[: max(1, int(0.8 * nodes))]).astype(np.int64)
    cases = [
        ("spmm", _kernels.spmm_numpy, _kernels.spmm_numba,
         (adj.indptr, adj.indices, adj.weights, x)),
        ("gcn_norm", _kernels.gcn_norm_numpy, _kernels.gcn_norm_numba,
         (adj.indptr, adj.indices, adj.weights, 2.0, True)),
        ("induced_subgraph", _kernels.induced_subgraph_numpy, _kernels.induced_subgraph_numba,
         (adj.indptr, adj.indices, adj.weights, kept)),
    ]
    rows = []
    for name, np_fn, nb_fn, args in cases:
        row = {"kernel": name, "numpy_s": _time(np_fn, args, repeats),
               "numba_s": None, "speedup": None, "agree": None}
        if nb_fn is not None:
            nb_fn(*args)  # trigger JIT before timing
            row["numba_s"] = _time(nb_fn, args, repeats)
            row["speedup"] = row["numpy_s"] / row["numba_s"]
            ref, got = np_fn(*args), nb_fn(*args)
            if not isinstance(ref, tuple):
                ref, got = (ref,), (got,)
            row["agree"] = all(np.allclose(a, b, rtol=1e-12, atol=1e-12)
                               for a, b in zip(ref, got))
        rows.append(row)
    return rows


def format_rows(rows) -> str:
    lines = [f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>9} {'agree':>6}"]
    for r in rows:
        numba_s = f"{r['numba_s'] * 1e3:.3f}ms" if r["numba_s"] is not None else "-"
        speedup = f"{r['speedup']:.1f}x" if r["speedup"] is not None else "-"
        agree = {True: "yes", False: "NO", None: "-"}[r["agree"]]
        lines.append(f"{r['kernel']:<18} {r['numpy_s'] * 1e3:>8.3f}ms {numba_s:>10} "
                     f"{speedup:>9} {agree:>6}")
    return "\n".join(lines)
