"""Partition function estimators over Gibbs sample streams.

Two families:

* Reciprocal-mass (Ogata-Tanemura style) estimation: the sample mean of
  1/f over draws from p_f, scaled by the support size, estimates 1/Z_f.
  The tree variant applies this to the by-product strip marginals f_A or
  f_B, whose support sizes stay computable even when f itself is an
  indicator and |S_f| = Z_f is the unknown.

* Tempered (multilayer) importance sampling: Z_f / Z_base telescopes into
  per-layer ratios mean(w(x)^(a_{j-1} - a_j)) under samples from the layer
  target, with exponents 1 = a_0 > a_1 > ... > a_J >= 0.

All sample terms enter through log-sum-exp; the 1/f terms are negated
logs.  Channel-weighted masses on a 24x24 grid span hundreds of orders of
magnitude, so nothing here ever leaves log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gibbs import TargetSpec
from .grid import SupportCount
from .logspace import LN2, NEG_INF, logsumexp


class EstimatorError(ValueError):
    pass


class EstimatorAccumulator:
    """Streaming log-domain mean and second moment of positive terms.

    merge() is a pure reduction, so independent accumulators filled by
    concurrent workers combine into the same result as a single pass.
    """

    def __init__(self):
        self.count = 0
        self.log_sum = NEG_INF
        self.log_sum_sq = NEG_INF

    def add(self, log_term: float) -> None:
        self.count += 1
        self.log_sum = np.logaddexp(self.log_sum, log_term)
        self.log_sum_sq = np.logaddexp(self.log_sum_sq, 2.0 * log_term)

    def add_many(self, log_terms: np.ndarray) -> None:
        log_terms = np.asarray(log_terms, dtype=np.float64)
        if log_terms.size == 0:
            return
        self.count += log_terms.size
        self.log_sum = np.logaddexp(self.log_sum, logsumexp(log_terms))
        self.log_sum_sq = np.logaddexp(self.log_sum_sq, logsumexp(2.0 * log_terms))

    def merge(self, other: "EstimatorAccumulator") -> "EstimatorAccumulator":
        out = EstimatorAccumulator()
        out.count = self.count + other.count
        out.log_sum = float(np.logaddexp(self.log_sum, other.log_sum))
        out.log_sum_sq = float(np.logaddexp(self.log_sum_sq, other.log_sum_sq))
        return out

    @property
    def log_mean(self) -> float:
        if self.count < 1:
            raise EstimatorError("mean of an empty accumulator")
        return float(self.log_sum - math.log(self.count))

    def se_log(self) -> float:
        """Delta-method standard error of the log of the mean.

        sqrt(sample variance / K) / mean, evaluated entirely in log domain;
        0.0 when the terms are constant or K = 1.
        """
        if self.count < 2:
            return 0.0
        lm = self.log_mean
        if lm == NEG_INF:
            return float("inf")
        log_k_msq = math.log(self.count) + 2.0 * lm
        d = self.log_sum_sq
        if d <= log_k_msq:
            return 0.0
        log_var = d + math.log1p(-math.exp(log_k_msq - d)) - math.log(self.count - 1)
        log_se_mean = 0.5 * (log_var - math.log(self.count))
        return float(math.exp(log_se_mean - lm))


@dataclass(frozen=True)
class LayerSchedule:
    """Tempering exponents 1 = alphas[0] > alphas[1] > ... > alphas[J] >= 0."""

    alphas: tuple[float, ...]

    def __post_init__(self):
        a = self.alphas
        if len(a) < 1 or a[0] != 1.0:
            raise EstimatorError("schedule must start at exponent 1")
        if any(a[i] <= a[i + 1] for i in range(len(a) - 1)):
            raise EstimatorError(f"exponents must be strictly decreasing: {a}")
        if a[-1] < 0.0:
            raise EstimatorError("exponents must be nonnegative")

    @property
    def j(self) -> int:
        return len(self.alphas) - 1

    def delta(self, j: int) -> float:
        if not 1 <= j <= self.j:
            raise EstimatorError(f"layer index {j} outside 1..{self.j}")
        return self.alphas[j - 1] - self.alphas[j]

    @classmethod
    def geometric(cls, layers: int) -> "LayerSchedule":
        """The halving schedule 1, 1/2, 1/4, ..., 2**-layers."""
        if layers < 1:
            raise EstimatorError(f"need at least one layer, got {layers}")
        return cls(tuple(2.0 ** -j for j in range(layers + 1)))


@dataclass(frozen=True)
class EstimateWithError:
    """A log-domain point estimate with a delta-method log-scale stderr."""

    log_value: float
    se_log: float
    k: int

    @property
    def log2_value(self) -> float:
        return self.log_value / LN2

    @property
    def se_log2(self) -> float:
        return self.se_log / LN2


def _take(values, k) -> np.ndarray:
    if isinstance(values, np.ndarray):
        arr = values.astype(np.float64, copy=False)
    else:
        arr = np.fromiter(values, dtype=np.float64)
    if k is not None:
        if k > arr.size:
            raise EstimatorError(f"requested {k} samples, stream held {arr.size}")
        arr = arr[:k]
    if arr.size == 0:
        raise EstimatorError("estimator needs at least one sample")
    return arr


def ogata_tanemura_tree(
    log_marginals, support: SupportCount | float, k: int | None = None
) -> EstimateWithError:
    """log Z_f from by-product strip marginals of p_f samples.

    ``log_marginals`` are log f_A (or log f_B) values; ``support`` the
    log-domain size of that marginal's support.  The estimate is the
    negated log of mean(1/f_A) / |S|, with the same stream usable for the
    A and B variants separately.
    """
    log_s = support.log_value if isinstance(support, SupportCount) else float(support)
    terms = -_take(log_marginals, k)
    acc = EstimatorAccumulator()
    acc.add_many(terms)
    return EstimateWithError(log_s - acc.log_mean, acc.se_log(), acc.count)


def ogata_tanemura_direct(
    log_f_values,
    log_support_size: float,
    k: int | None = None,
    *,
    target: TargetSpec | None = None,
) -> EstimateWithError:
    """log Z_f from p_f samples of a strictly positive f.

    Unusable when f has zero-mass configurations: there the support size
    is the partition function itself, which is what is being estimated.
    Passing the target makes that precondition checkable; a sample with
    f = 0 is always rejected.
    """
    if target is not None and not target.is_strictly_positive:
        raise EstimatorError(
            "target has zero-mass configurations; its support size equals the "
            "unknown partition function. Use the tree variant on the strip "
            "marginals instead."
        )
    vals = _take(log_f_values, k)
    if np.any(vals == NEG_INF):
        raise EstimatorError("sample with zero mass (f = 0) in direct estimator")
    acc = EstimatorAccumulator()
    acc.add_many(-vals)
    return EstimateWithError(
        float(log_support_size) - acc.log_mean, acc.se_log(), acc.count
    )


def log_weight_mean(log_weights, exponent: float, k: int | None = None) -> EstimateWithError:
    """log of mean(w ** exponent) over the sample stream.

    exponent * log w uses the 0 * (-inf) = 0 convention, i.e. w ** 0 == 1
    even at w = 0, so a zero exponent returns exactly 0.
    """
    vals = _take(log_weights, k)
    if exponent == 0.0:
        terms = np.zeros_like(vals)
    else:
        terms = exponent * vals
    acc = EstimatorAccumulator()
    acc.add_many(terms)
    return EstimateWithError(acc.log_mean, acc.se_log(), acc.count)


def importance_ratio(
    log_weights, schedule: LayerSchedule, j: int, k: int | None = None
) -> EstimateWithError:
    """log of the layer-j ratio estimate Z_{g_{j-1}} / Z_{g_j}.

    ``log_weights`` are log w(x) for samples drawn under the layer-j
    target, where w is the tempered factor (w = f for pure kernel
    tempering, w = the channel likelihood for noisy-channel targets).
    """
    return log_weight_mean(log_weights, schedule.delta(j), k)


@dataclass(frozen=True)
class MultilayerEstimate:
    log_z: float
    se_log: float
    layers: tuple[EstimateWithError, ...]
    log_z_base: float

    @property
    def log2_z(self) -> float:
        return self.log_z / LN2

    @property
    def se_log2(self) -> float:
        return self.se_log / LN2


def multilayer_estimate(
    layer_log_weights,
    schedule: LayerSchedule,
    log_z_base: float,
    se_log_base: float = 0.0,
) -> MultilayerEstimate:
    """Combine per-layer weight streams into a log Z_f estimate.

    ``layer_log_weights[j-1]`` holds the log tempered weights of the
    samples drawn under layer j; the layers are independent runs, and the
    estimate is the telescoped sum of the log ratios plus the supplied
    base estimate of log Z at the deepest exponent.
    """
    if len(layer_log_weights) != schedule.j:
        raise EstimatorError(
            f"{len(layer_log_weights)} weight streams for {schedule.j} layers"
        )
    layers = tuple(
        importance_ratio(w, schedule, j)
        for j, w in enumerate(layer_log_weights, start=1)
    )
    log_z = float(log_z_base) + sum(r.log_value for r in layers)
    se = math.sqrt(se_log_base**2 + sum(r.se_log**2 for r in layers))
    return MultilayerEstimate(log_z, se, layers, float(log_z_base))
