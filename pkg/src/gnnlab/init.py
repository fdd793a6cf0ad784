"""Parameter initialisation and the data-driven variance rescaling pass.

The standard scheme draws convolution weights from a fan-in-scaled normal
distribution and projection/dense weights from a fan-sum-scaled uniform one;
biases start at zero. The rescaling pass ("reinit") then walks the block
stack in order, measuring the standard deviation of each block's output over
a calibration set and dividing it out, so every block emits unit-variance
activations on that set. Convolution divisors are folded into the weights
and bias; pool divisors are kept as forward-time scale factors because the
pool scores are projection-norm invariant, leaving no weight to fold into.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, ConfigError
from .layers import GcnLayer, TopKPool
from .numcore import Rng

REINIT_TOL = 1e-6

INIT_KINDS = ("standard", "standard_then_reinit")


@dataclass(frozen=True)
class InitScheme:
    kind: str = "standard"
    seed: int | None = None            # defaults to the training seed
    reinit_sample_cap: int | None = None  # calibration graphs; None = all

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ConfigError(f"unknown init kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed,
                "reinit_sample_cap": self.reinit_sample_cap}

    @classmethod
    def from_dict(cls, d: dict) -> "InitScheme":
        unknown = set(d) - {"kind", "seed", "reinit_sample_cap"}
        if unknown:
            raise ConfigError(f"unknown init key(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class ReinitReport:
    """Per-block divisors and the verified post-rescale output stds."""
    blocks: list = field(default_factory=list)
    divisors: list = field(default_factory=list)
    post_std: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"blocks": list(self.blocks),
                "divisors": [float(v) for v in self.divisors],
                "post_std": [float(v) for v in self.post_std]}


def kaiming_std(fan_in: int) -> float:
    return math.sqrt(2.0 / fan_in)


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_standard(model, rng: Rng) -> None:
    """Kaiming-normal convolution weights, Glorot-uniform pool/dense weights,
    zero biases, unit scale divisors. Draw order follows the registry."""
    for gcn, pool in model.blocks:
        gcn.w[...] = rng.normal(gcn.fan_in, gcn.fan_out, kaiming_std(gcn.fan_in))
        gcn.b[...] = 0.0
        gcn.scale = 1.0
        if pool is not None:
            f = pool.p.shape[0]
            pool.p[...] = rng.uniform(1, f, glorot_bound(f, 1))[0]
            pool.scale = 1.0
    for layer in model.mlp:
        layer.w[...] = rng.uniform(layer.fan_in, layer.fan_out,
                                   glorot_bound(layer.fan_in, layer.fan_out))
        layer.b[...] = 0.0


class _Moments:
    """Streaming count/sum/sum-of-squares over matrix entries."""

    __slots__ = ("count", "total", "sq")

    def __init__(self):
        self.count = 0
        self.total = 0.0
        self.sq = 0.0

    def add(self, x: np.ndarray):
        self.count += x.size
        self.total += float(x.sum())
        self.sq += float(np.square(x).sum())

    def std(self) -> float:
        mean = self.total / self.count
        var = max(self.sq / self.count - mean * mean, 0.0)
        return math.sqrt(var)


def _block_output_std(model, graphs, stage: int) -> float:
    mom = _Moments()
    for g in graphs:
        mom.add(model.run_blocks(g, stage))
    return mom.std()


def reinit(model, calibration, tol: float = REINIT_TOL) -> ReinitReport:
    """Rescale each block in turn so its calibration-set output std is one.

    Walks the flattened conv/pool stack; for each stage the calibration
    graphs are pushed through everything rescaled so far, the std of this
    stage's output (post-activation for convolutions) is measured, and its
    inverse is applied. The MLP head is never touched. Raises
    :class:`CalibrationError` when a stage emits constant output.
    """
    if not calibration:
        raise CalibrationError("reinit needs a non-empty calibration set")
    stages = model.block_stages()
    report = ReinitReport()
    for idx, (name, layer) in enumerate(stages):
        sigma = _block_output_std(model, calibration, idx)
        if sigma < 1e-300:
            raise CalibrationError(f"block {name} produced constant output during reinit")
        if isinstance(layer, GcnLayer):
            layer.w /= sigma
            layer.b /= sigma
        elif isinstance(layer, TopKPool):
            layer.scale *= sigma
        report.blocks.append(name)
        report.divisors.append(float(sigma))
    for idx, (name, _) in enumerate(stages):
        post = _block_output_std(model, calibration, idx)
        report.post_std.append(float(post))
        if abs(post - 1.0) > max(tol, 1e-9):
            raise CalibrationError(
                f"block {name} std is {post:.9f} after reinit (expected 1 within {tol})")
    return report
