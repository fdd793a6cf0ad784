"""Model zoo: declarative specs wired into layer stacks with JK-style taps.

Five kinds are supported:

* ``mlp`` — structure-blind baseline: global readout of the input features
  into a three-layer MLP; the adjacency is never touched.
* ``gcn_mlp`` / ``gcn_r_mlp`` — a single graph convolution whose readout is
  concatenated with the readout of the raw input (the skip from the input
  graph) before the MLP; the ``_r`` variant keeps the convolution frozen at
  its random initial values.
* ``jk_sum`` — three convolution+pool blocks, the max-and-sum readout of
  every convolution output fed to the MLP through skip taps.
* ``probe4`` — four convolution+pool blocks, global mean of the final
  representation into the MLP, no skip taps (the diagnostics probe).
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, ShapeError, SpecError, StateError
from .graphdata import Graph
from .init import init_standard
from .layers import DenseLayer, GcnLayer, Readout, TopKPool
from .numcore import Rng

MODEL_KINDS = ("mlp", "gcn_r_mlp", "gcn_mlp", "jk_sum", "probe4")
JK_AGGS = ("concat", "sum")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hidden_dim: int = 128
    mlp_dims: tuple = (128, 128)
    k: float = 0.8
    readout_kind: str = "mean"
    jk_agg: str = "concat"
    freeze_gcn: bool = False
    tap_pooled: bool = False  # tap block outputs after the pool instead of the GCN
    gcn_norm: str = "sym"     # "sym" or "row" degree normalisation

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise SpecError(f"unknown model kind {self.kind!r}")
        if len(self.mlp_dims) != 2:
            raise SpecError("the MLP head has exactly three layers; give two hidden widths")
        if self.jk_agg not in JK_AGGS:
            raise SpecError(f"unknown jk aggregation {self.jk_agg!r}")
        if not (0 <= self.k < 1):
            raise SpecError("pool keep fraction must lie in [0, 1)")
        if self.gcn_norm not in ("sym", "row"):
            raise SpecError(f"unknown gcn normalisation {self.gcn_norm!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hidden_dim": self.hidden_dim,
                "mlp_dims": list(self.mlp_dims), "k": self.k,
                "readout_kind": self.readout_kind, "jk_agg": self.jk_agg,
                "freeze_gcn": self.freeze_gcn, "tap_pooled": self.tap_pooled,
                "gcn_norm": self.gcn_norm}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model key(s): {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("model config needs a 'kind'")
        kwargs = dict(d)
        if "mlp_dims" in kwargs:
            kwargs["mlp_dims"] = tuple(kwargs["mlp_dims"])
        try:
            return cls(**kwargs)
        except SpecError as exc:
            raise ConfigError(str(exc)) from exc


def _num_blocks(kind: str) -> int:
    return {"mlp": 0, "gcn_mlp": 1, "gcn_r_mlp": 1, "jk_sum": 3, "probe4": 4}[kind]


class Model:
    """An instantiated layer stack with a named-parameter registry.

    ``taps`` lists (source, Readout) pairs feeding the MLP head; a source is
    ``"input"``, ``"final"``, ``("gcn", i)`` or ``("pool", i)``. Forward
    caches per-layer state, so an instance is single-owner during a step.
    """

    def __init__(self, spec, num_features, num_classes, blocks, taps, mlp, frozen):
        self.spec = spec
        self.num_features = num_features
        self.num_classes = num_classes
        self.blocks = blocks  # list of (GcnLayer, TopKPool | None)
        self.taps = taps
        self.mlp = mlp
        self.frozen = frozen
        self.params = {}
        for i, (gcn, pool) in enumerate(blocks, start=1):
            self.params[f"gcn{i}.W"] = gcn.w
            self.params[f"gcn{i}.b"] = gcn.b
            if pool is not None:
                self.params[f"pool{i}.p"] = pool.p
        for j, layer in enumerate(mlp, start=1):
            self.params[f"mlp{j}.W"] = layer.w
            self.params[f"mlp{j}.b"] = layer.b
        self._cache = None
        self.last_grads = None

    # ---------------------------------------------------------------- forward

    def forward(self, g: Graph) -> np.ndarray:
        if g.features.shape[1] != self.num_features:
            raise ShapeError(
                f"model expects {self.num_features} features, graph has {g.features.shape[1]}")
        adj, x = g.adj, g.features
        gcn_outs = []
        stage_x = [x]  # stage_x[i] is the input to block i; stage_x[-1] the final output
        for gcn, pool in self.blocks:
            h = gcn.forward(adj, x)
            gcn_outs.append(h)
            if pool is not None:
                adj, x, _ = pool.forward(adj, h)
            else:
                x = h
            stage_x.append(x)
        tap_vecs = []
        for source, ro in self.taps:
            tap_vecs.append(ro.forward(self._tap_matrix(source, g, gcn_outs, stage_x)))
        if self.spec.jk_agg == "sum" and len(tap_vecs) > 1:
            z = np.sum(tap_vecs, axis=0)[None, :]
        else:
            z = np.concatenate(tap_vecs)[None, :]
        a = z
        for layer in self.mlp:
            a = layer.forward(a)
        self._cache = {"gcn_outs": gcn_outs, "stage_x": stage_x}
        return a[0]

    @staticmethod
    def _tap_matrix(source, g, gcn_outs, stage_x):
        if source == "input":
            return g.features
        if source == "final":
            return stage_x[-1]
        kind, i = source
        return gcn_outs[i] if kind == "gcn" else stage_x[i + 1]

    def backward(self, grad_scores: np.ndarray) -> dict:
        """Gradients for every registered parameter; frozen entries are zeroed."""
        if self._cache is None:
            raise StateError("model backward called before forward")
        gcn_outs = self._cache["gcn_outs"]
        stage_x = self._cache["stage_x"]
        grads = {}
        a_grad = np.asarray(grad_scores, dtype=np.float64)[None, :]
        for j in range(len(self.mlp), 0, -1):
            a_grad, layer_grads = self.mlp[j - 1].backward(a_grad)
            grads[f"mlp{j}.W"] = layer_grads["W"]
            grads[f"mlp{j}.b"] = layer_grads["b"]
        z_grad = a_grad[0]
        if self.spec.jk_agg == "sum" and len(self.taps) > 1:
            tap_grads = [z_grad] * len(self.taps)
        else:
            widths = [ro.width(self._tap_dim(source)) for source, ro in self.taps]
            offsets = np.concatenate(([0], np.cumsum(widths)))
            tap_grads = [z_grad[offsets[i]:offsets[i + 1]] for i in range(len(self.taps))]
        gcn_grads = [np.zeros_like(h) for h in gcn_outs]
        stage_grads = [np.zeros_like(x) for x in stage_x]
        for (source, ro), gvec in zip(self.taps, tap_grads):
            mat = ro.backward(gvec)
            if source == "input":
                continue  # no parameters upstream of the raw input
            if source == "final":
                stage_grads[-1] += mat
            elif source[0] == "gcn":
                gcn_grads[source[1]] += mat
            else:
                stage_grads[source[1] + 1] += mat
        x_grad = stage_grads[-1]
        for i in range(len(self.blocks) - 1, -1, -1):
            gcn, pool = self.blocks[i]
            if pool is not None:
                h_grad, pool_grads = pool.backward(x_grad)
                grads[f"pool{i + 1}.p"] = pool_grads["p"]
            else:
                h_grad = x_grad
            h_grad = h_grad + gcn_grads[i]
            x_grad, layer_grads = gcn.backward(h_grad)
            grads[f"gcn{i + 1}.W"] = layer_grads["W"]
            grads[f"gcn{i + 1}.b"] = layer_grads["b"]
            x_grad = x_grad + stage_grads[i]
        for name in self.frozen:
            grads[name] = np.zeros_like(self.params[name])
        self.last_grads = grads
        return grads

    def _tap_dim(self, source) -> int:
        return self.num_features if source == "input" else self.spec.hidden_dim

    def predict(self, g: Graph) -> int:
        scores = self.forward(g)
        return int(np.argmax(scores))  # argmax ties resolve to the lowest index

    # ------------------------------------------------------------ inspection

    def block_stages(self):
        """(layer id, layer) pairs for the convolution/pool stack, in order."""
        out = []
        for i, (gcn, pool) in enumerate(self.blocks, start=1):
            out.append((f"gcn{i}", gcn))
            if pool is not None:
                out.append((f"pool{i}", pool))
        return out

    def run_blocks(self, g: Graph, upto: int) -> np.ndarray:
        """Forward through the block stack only, returning the output of flat
        stage ``upto`` (0 = first convolution, 1 = its pool, and so on)."""
        adj, x = g.adj, g.features
        stage = 0
        for gcn, pool in self.blocks:
            h = gcn.forward(adj, x)
            if stage == upto:
                return h
            stage += 1
            if pool is not None:
                adj, x, _ = pool.forward(adj, h)
                if stage == upto:
                    return x
                stage += 1
            else:
                x = h
        raise StateError(f"block stage {upto} out of range")

    def trace_states(self):
        """(layer id, output, preactivation-or-None) per block stage of the
        most recent forward."""
        if self._cache is None:
            raise StateError("no cached forward state to trace")
        gcn_outs = self._cache["gcn_outs"]
        stage_x = self._cache["stage_x"]
        out = []
        for i, (gcn, pool) in enumerate(self.blocks, start=1):
            out.append((f"gcn{i}", gcn_outs[i - 1], gcn.last_preactivation))
            if pool is not None:
                out.append((f"pool{i}", stage_x[i], None))
        return out


def build(spec: ModelSpec, num_features: int, num_classes: int, rng: Rng) -> Model:
    """Allocate a model for the spec and apply the standard initialisation."""
    if num_features < 1 or num_classes < 1:
        raise SpecError("need at least one feature and one class")
    nblocks = _num_blocks(spec.kind)
    hidden = spec.hidden_dim
    blocks = []
    for i in range(nblocks):
        fan_in = num_features if i == 0 else hidden
        gcn = GcnLayer(np.zeros((fan_in, hidden)), np.zeros(hidden),
                       activation="relu", norm=spec.gcn_norm)
        pool = None
        if spec.kind in ("jk_sum", "probe4"):
            pool = TopKPool(np.zeros(hidden), k=spec.k)
        blocks.append((gcn, pool))

    taps = []
    if spec.kind == "mlp":
        taps.append(("input", Readout(spec.readout_kind)))
        mlp_in = num_features
    elif spec.kind in ("gcn_mlp", "gcn_r_mlp"):
        taps.append(("input", Readout(spec.readout_kind)))
        taps.append((("gcn", 0), Readout(spec.readout_kind)))
        mlp_in = num_features + hidden
    elif spec.kind == "jk_sum":
        source_kind = "pool" if spec.tap_pooled else "gcn"
        for i in range(nblocks):
            taps.append(((source_kind, i), Readout("max_and_sum")))
        per_tap = 2 * hidden
        mlp_in = per_tap if spec.jk_agg == "sum" else nblocks * per_tap
    else:  # probe4
        taps.append(("final", Readout("mean")))
        mlp_in = hidden

    dims = [mlp_in, spec.mlp_dims[0], spec.mlp_dims[1], num_classes]
    mlp = [DenseLayer(np.zeros((dims[j], dims[j + 1])), np.zeros(dims[j + 1]),
                      activation="relu" if j < 2 else "none")
           for j in range(3)]

    frozen = set()
    if spec.kind == "gcn_r_mlp" or spec.freeze_gcn:
        for i in range(1, nblocks + 1):
            frozen.add(f"gcn{i}.W")
            frozen.add(f"gcn{i}.b")

    model = Model(spec, num_features, num_classes, blocks, taps, mlp, frozen)
    init_standard(model, rng)
    return model
