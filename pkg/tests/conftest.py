"""Shared fixtures and oracles for the suite."""

from pathlib import Path

import numpy as np
import pytest

from gnnlab import Dataset, Graph, Rng, SparseAdj
from gnnlab.graphdata import fetch_tu, is_cached, parse_tu


# --------------------------------------------------------------------------
# random instances

def random_adj(rng: Rng, n: int, edge_prob: float = 0.35) -> SparseAdj:
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.integers(0, 1000) < edge_prob * 1000:
                edges.add((i, j))
    return SparseAdj.from_edges(n, edges) if edges else SparseAdj.empty(n)


def random_graph(rng: Rng, n: int, f: int, label: int = 0,
                 edge_prob: float = 0.35) -> Graph:
    return Graph(adj=random_adj(rng, n, edge_prob),
                 features=rng.normal(n, f, 1.0), label=label, id=0)


def permute_graph(g: Graph, perm: np.ndarray) -> Graph:
    """Relabel nodes: node i becomes perm[i]."""
    edges = [(int(perm[i]), int(perm[j])) for (i, j) in g.adj.edge_set() if i < j]
    adj = SparseAdj.from_edges(g.adj.n, edges) if edges else SparseAdj.empty(g.adj.n)
    feats = np.empty_like(g.features)
    feats[perm] = g.features
    return Graph(adj=adj, features=feats, label=g.label, id=g.id)


def randomize_params(model, rng: Rng, bound: float = 0.7) -> None:
    """Fill every parameter (biases included) with uniform draws.

    Gradient checks need instances away from ReLU kinks and top-k ties;
    zero biases put deep probes exactly on the kink, so the checks
    randomise everything.
    """
    for p in model.params.values():
        p[...] = rng.uniform(1, p.size, bound)[0].reshape(p.shape)


# --------------------------------------------------------------------------
# synthetic corpora

def synth_dataset(num_graphs: int, seed: int, feat_dim: int = 3,
                  num_classes: int = 2, n_lo: int = 10, n_hi: int = 20,
                  edge_prob: float = 0.2, signal: float = 0.6,
                  name: str = "SYNTH") -> Dataset:
    """Graphs with class-dependent node-label one-hots (label_onehot style).

    ``signal`` in [0, 1] is how strongly node labels lean toward the graph
    class; 0 gives an unlearnable corpus, 1 a trivially separable one.
    """
    rng = Rng(seed)
    graphs = []
    for gi in range(num_graphs):
        label = gi % num_classes
        n = n_lo + rng.integers(0, n_hi - n_lo + 1)
        rows = np.zeros((n, feat_dim))
        for v in range(n):
            if rng.integers(0, 1000) < signal * 1000:
                col = label % feat_dim
            else:
                col = rng.integers(0, feat_dim)
            rows[v, col] = 1.0
        graphs.append(Graph(adj=random_adj(rng, n, edge_prob), features=rows,
                            label=label, id=gi))
    return Dataset(name=name, graphs=tuple(graphs), num_classes=num_classes,
                   feature_dim=feat_dim, feature_policy="label_onehot")


def constant_feature_dataset(num_graphs: int, majority: float = 0.6,
                             seed: int = 0) -> Dataset:
    """Every graph looks identical; only the label distribution carries signal."""
    rng = Rng(seed)
    graphs = []
    cut = int(round(num_graphs * majority))
    for gi in range(num_graphs):
        label = 0 if gi < cut else 1
        n = 4
        graphs.append(Graph(adj=random_adj(rng, n, 0.5),
                            features=np.ones((n, 1)), label=label, id=gi))
    return Dataset(name="CONST", graphs=tuple(graphs), num_classes=2,
                   feature_dim=1, feature_policy="attributes")


def write_tu_files(directory: Path, name: str, graphs_edges, labels,
                   node_labels=None, node_attributes=None) -> Path:
    """Write raw TU text files from explicit per-graph edge lists (1-indexed)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    a_lines, ind_lines = [], []
    offset = 0
    for gi, (n, edges) in enumerate(graphs_edges, start=1):
        for _ in range(n):
            ind_lines.append(str(gi))
        for (i, j) in edges:
            a_lines.append(f"{offset + i}, {offset + j}")
            a_lines.append(f"{offset + j}, {offset + i}")
        offset += n
    (directory / f"{name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (directory / f"{name}_graph_indicator.txt").write_text("\n".join(ind_lines) + "\n")
    (directory / f"{name}_graph_labels.txt").write_text(
        "\n".join(str(v) for v in labels) + "\n")
    if node_labels is not None:
        (directory / f"{name}_node_labels.txt").write_text(
            "\n".join(str(v) for v in node_labels) + "\n")
    if node_attributes is not None:
        (directory / f"{name}_node_attributes.txt").write_text(
            "\n".join(", ".join(str(x) for x in row) for row in node_attributes) + "\n")
    return directory


# --------------------------------------------------------------------------
# finite differences

def fd_max_rel_err(model, g, direction, h: float = 1e-6, skip=frozenset()) -> float:
    """Max guarded relative error between analytic and central-difference
    gradients of sum(scores * direction) over all (non-skipped) parameters."""
    direction = np.asarray(direction, dtype=np.float64)

    def scalar():
        return float(model.forward(g) @ direction)

    scalar()
    analytic = model.backward(direction)
    worst = 0.0
    for name, p in model.params.items():
        if name in skip:
            continue
        flat = p.reshape(-1)
        a = analytic[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            fp = scalar()
            flat[idx] = orig - h
            fm = scalar()
            flat[idx] = orig
            fd = (fp - fm) / (2.0 * h)
            worst = max(worst, abs(a[idx] - fd) / max(1.0, abs(fd)))
    return worst


def layer_fd_max_rel_err(params, run, h: float = 1e-6) -> float:
    """Same guarded error for a bare layer: ``run()`` returns the scalar and
    ``params`` maps names to (array, analytic_grad) pairs."""
    worst = 0.0
    for _, (arr, grad) in params.items():
        flat = arr.reshape(-1)
        a = np.asarray(grad).reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            fp = run()
            flat[idx] = orig - h
            fm = run()
            flat[idx] = orig
            fd = (fp - fm) / (2.0 * h)
            worst = max(worst, abs(a[idx] - fd) / max(1.0, abs(fd)))
    return worst


# --------------------------------------------------------------------------
# real datasets (network-gated)

DATA_ENV_HINT = ("dataset unavailable: no network route to the TU archive host "
                 "and nothing cached (set GNNLAB_CACHE to a pre-populated cache "
                 "to run this criterion)")


@pytest.fixture(scope="session")
def tu_dataset_dir():
    """Factory fixture: resolve a real TU dataset to its raw dir or skip."""
    def resolve(name: str) -> Path:
        if is_cached(name):
            return fetch_tu(name)
        try:
            return fetch_tu(name)
        except Exception:
            pytest.skip(f"{name} {DATA_ENV_HINT}")
    return resolve


@pytest.fixture(scope="session")
def proteins(tu_dataset_dir):
    raw = tu_dataset_dir("PROTEINS")
    return parse_tu(raw, "PROTEINS", feature_policy="label_onehot")
