"""Information rates of the constrained grid over a memoryless AWGN channel.

Inputs are uniform over the constraint's feasible set; each cell sends
(-1)**x and receives it plus independent Gaussian noise of variance
sigma2.  The conditional entropy H(Y|X) is closed form, so the mutual
information rate reduces to estimating H(Y), done with a double loop:

* outer loop: draw x from the constrained uniform by Gibbs sampling,
  simulate y through the channel;
* inner loop: estimate log p(y), which is the partition function of the
  channel-weighted grid function, by tempered importance sampling with
  the channel likelihood raised to a halving exponent schedule, the
  deepest layer anchored by the tree reciprocal-mass estimator.

The constraint indicator stays at exponent one in every layer, so each
layer samples feasible configurations only and the deepest layer's
partition value approaches the feasible count as its exponent goes to 0;
the uniform-input normalization 1/Z_f enters once, as an exact additive
constant in log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import seeding
from .capacity import TRANSFER_BUDGET, BudgetError, exact_log_z_transfer_matrix
from .estimators import LayerSchedule, log_weight_mean, ogata_tanemura_tree
from .gibbs import GibbsEnsemble, TargetSpec, default_burn_in
from .grid import Configuration, GridError, GridSpec, count_support_zeroed
from .logspace import LN2


@dataclass(frozen=True)
class ChannelModel:
    """Bipolar-input AWGN channel: y = (-1)**x + noise, noise ~ N(0, sigma2)."""

    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0.0:
            raise GridError(f"noise variance must be positive, got {self.sigma2}")

    @classmethod
    def from_snr_db(cls, snr_db: float) -> "ChannelModel":
        # SNR = 1 / sigma2 for unit-amplitude signaling
        return cls(10.0 ** (-snr_db / 10.0))

    @property
    def snr_db(self) -> float:
        return -10.0 * math.log10(self.sigma2)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def log_likelihood_tables(self, ys: np.ndarray) -> np.ndarray:
        """ln p(y | x) per cell and symbol: (..., M, M) -> (..., M, M, 2)."""
        ys = np.asarray(ys, dtype=np.float64)
        const = -0.5 * math.log(2.0 * math.pi * self.sigma2)
        out = np.empty(ys.shape + (2,))
        out[..., 0] = const - (ys - 1.0) ** 2 / (2.0 * self.sigma2)
        out[..., 1] = const - (ys + 1.0) ** 2 / (2.0 * self.sigma2)
        return out


@dataclass
class OutputSample:
    """A channel output with the input it came from (diagnostics only)."""

    y: np.ndarray
    x: Configuration


def simulate_output(
    x: Configuration, channel: ChannelModel, rng: np.random.Generator
) -> OutputSample:
    levels = 1.0 - 2.0 * x.bits.astype(np.float64)
    y = levels + channel.sigma * rng.standard_normal(levels.shape)
    return OutputSample(y, x)


def conditional_entropy_rate(channel: ChannelModel) -> float:
    """H(Y|X) per symbol in bits: half the log of 2*pi*e*sigma2."""
    return 0.5 * math.log2(2.0 * math.pi * math.e * channel.sigma2)


def default_layer_count(snr_db: float) -> int:
    """Layer count heuristic: 3 at and below 0 dB, +1 per 2 dB above.

    Higher SNR concentrates the channel-weighted mass into isolated modes,
    which needs more intermediate temperatures (6 layers at 6 dB).
    """
    if snr_db <= 0.0:
        return 3
    return 3 + math.ceil(snr_db / 2.0)


def _channel_log_weights(configs: np.ndarray, lls: np.ndarray) -> np.ndarray:
    """ln p(y_b | x_b) for each member's current configuration."""
    return np.where(configs.astype(bool), lls[..., 1], lls[..., 0]).sum(axis=(1, 2))


@dataclass(frozen=True)
class InnerEstimate:
    """Per-output inner-loop results, natural-log domain."""

    log_z_tilde: np.ndarray        # (B,) log of sum_x f(x) p(y_b | x)
    se_log: np.ndarray             # (B,)
    layer_log_ratios: np.ndarray   # (J, B)
    log_z_base: np.ndarray         # (B,)
    traces: dict | None = None     # first output's running estimates vs k


def _running_log_mean(terms: np.ndarray) -> np.ndarray:
    k = np.arange(1, terms.size + 1, dtype=np.float64)
    return np.logaddexp.accumulate(terms) - np.log(k)


def _inner_log_z_tilde(
    grid: GridSpec,
    lls: np.ndarray,
    schedule: LayerSchedule,
    k_per_layer: int,
    seed: int,
    ells,
    burn_in: int,
    thinning: int,
    collect_traces: bool = False,
) -> InnerEstimate:
    """Tempered estimate of log sum_x f(x) p(y|x) for a batch of outputs.

    Every (output, layer) pair runs a fresh all-zeros chain on its own
    derived stream; layer j samples the target with the channel term
    scaled by its exponent, and the deepest exponent's partition value is
    estimated from the A-side by-product marginals.  With collect_traces
    the first output also records each layer ratio's and the base
    estimate's running value versus sample count.
    """
    b = lls.shape[0]
    ells = list(ells)
    j_layers = schedule.j
    ratio_log = np.zeros((j_layers, b))
    se_sq = np.zeros(b)
    traces = {} if collect_traces else None
    for j in range(1, j_layers + 1):
        targets = [TargetSpec(grid, 1.0, schedule.alphas[j] * lls[i]) for i in range(b)]
        rngs = [
            seeding.rng_for(seed, seeding.INNER_LAYER, ells[i], j) for i in range(b)
        ]
        ens = GibbsEnsemble(targets, rngs)
        weights = np.empty((b, k_per_layer))
        for i, _, _, cfg in ens.run(burn_in, k_per_layer, thinning, with_configs=True):
            weights[:, i] = _channel_log_weights(cfg, lls)
        delta = schedule.delta(j)
        for i in range(b):
            est = log_weight_mean(weights[i], delta)
            ratio_log[j - 1, i] = est.log_value
            se_sq[i] += est.se_log**2
        if collect_traces:
            traces[f"log2_R{j}"] = _running_log_mean(delta * weights[0]) / LN2

    # deepest layer's partition value from the tree reciprocal-mass estimator
    log_sa = count_support_zeroed(grid, "A").log_value
    targets = [
        TargetSpec(grid, 1.0, schedule.alphas[j_layers] * lls[i]) for i in range(b)
    ]
    rngs = [seeding.rng_for(seed, seeding.INNER_LAYER, ells[i], 0) for i in range(b)]
    ens = GibbsEnsemble(targets, rngs)
    fa = np.empty((b, k_per_layer))
    for i, log_fa, _ in ens.run(burn_in, k_per_layer, thinning):
        fa[:, i] = log_fa
    base_log = np.empty(b)
    for i in range(b):
        est = ogata_tanemura_tree(fa[i], log_sa)
        base_log[i] = est.log_value
        se_sq[i] += est.se_log**2
    if collect_traces:
        traces["log2_Zbase_per_symbol"] = (
            (log_sa - _running_log_mean(-fa[0])) / LN2 / grid.n
        )
    return InnerEstimate(
        log_z_tilde=ratio_log.sum(0) + base_log,
        se_log=np.sqrt(se_sq),
        layer_log_ratios=ratio_log,
        log_z_base=base_log,
        traces=traces,
    )


def _resolve_log2_z_f(grid: GridSpec, log2_z_f: float | None) -> float:
    if log2_z_f is not None:
        return float(log2_z_f)
    if grid.m <= TRANSFER_BUDGET:
        return exact_log_z_transfer_matrix(grid) / LN2
    raise BudgetError(
        f"M={grid.m} exceeds the exact-oracle budget; pass log2_z_f from a "
        "capacity estimate"
    )


@dataclass(frozen=True)
class Log2PEstimate:
    log2_p: float
    se_bits: float
    k_per_layer: int
    schedule: LayerSchedule


def log2_p_y_batch(
    ys: np.ndarray,
    grid: GridSpec,
    channel: ChannelModel,
    schedule: LayerSchedule,
    k_per_layer: int,
    seed: int,
    *,
    log2_z_f: float | None = None,
    burn_in: int | None = None,
    thinning: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """log2 p(y) for a (B, M, M) batch of outputs, chains run in lockstep.

    Output b uses the streams of outer-sample index b, exactly as the
    double-loop estimator would; returns (log2_p, se_bits) arrays.
    """
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim != 3 or ys.shape[1:] != (grid.m, grid.m):
        raise GridError(f"batch shape {ys.shape} must be (B, {grid.m}, {grid.m})")
    if burn_in is None:
        burn_in = default_burn_in(grid)
    lz2 = _resolve_log2_z_f(grid, log2_z_f)
    inner = _inner_log_z_tilde(
        grid, channel.log_likelihood_tables(ys), schedule, k_per_layer,
        seed, range(ys.shape[0]), burn_in, thinning,
    )
    return inner.log_z_tilde / LN2 - lz2, inner.se_log / LN2


def log2_p_y(
    y,
    grid: GridSpec,
    channel: ChannelModel,
    schedule: LayerSchedule,
    k_per_layer: int,
    seed: int,
    *,
    log2_z_f: float | None = None,
    burn_in: int | None = None,
    thinning: int = 1,
    ell: int = 0,
) -> Log2PEstimate:
    """log2 p(y) for one channel output by tempered importance sampling.

    p(y) is the partition function of f(x) p(y|x) / Z_f; the constraint
    normalization enters as the exact constant -log2 Z_f (supply an
    estimate for grids beyond the transfer-matrix budget).
    """
    if isinstance(y, OutputSample):
        y = y.y
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (grid.m, grid.m):
        raise GridError(f"output shape {y.shape} does not match grid")
    if burn_in is None:
        burn_in = default_burn_in(grid)
    lz2 = _resolve_log2_z_f(grid, log2_z_f)
    inner = _inner_log_z_tilde(
        grid, channel.log_likelihood_tables(y[None]), schedule, k_per_layer,
        seed, [ell], burn_in, thinning,
    )
    return Log2PEstimate(
        log2_p=float(inner.log_z_tilde[0] / LN2 - lz2),
        se_bits=float(inner.se_log[0] / LN2),
        k_per_layer=k_per_layer,
        schedule=schedule,
    )


@dataclass(frozen=True)
class InfoRateResult:
    """Double-loop estimate of the mutual information rate.

    The rate averages the per-sample information density
    (log2 p(y|x) - log2 p(y)) / N, whose expectation equals
    H(Y)/N - H(Y|X)/N exactly (the conditional term integrates to the
    closed form) but whose variance is far smaller than the plain
    entropy difference: the N-cell volume terms of the two log densities
    cancel sample by sample.  h_y_per_symbol still reports the direct
    entropy average for reference.
    """

    snr_db: float
    m: int
    l: int
    j: int
    k_per_layer: int
    log2_p_samples: np.ndarray       # (L,) inner-loop log2 p(y_ell)
    log2_p_cond_samples: np.ndarray  # (L,) exact log2 p(y_ell | x_ell)
    h_y_per_symbol: float
    h_y_given_x_per_symbol: float
    info_rate_per_symbol: float
    stderr: float                    # spread of the per-sample density / sqrt(L)
    running_rate: np.ndarray         # (L,) estimate after the first ell samples
    layer_traces: dict | None = None  # first sample's inner running estimates


def estimate_info_rate(
    grid: GridSpec,
    channel: ChannelModel,
    l: int,
    k_per_layer: int,
    seed: int,
    *,
    schedule: LayerSchedule | None = None,
    log2_z_f: float | None = None,
    burn_in: int | None = None,
    thinning: int = 1,
    collect_layer_traces: bool = False,
) -> InfoRateResult:
    """Double-loop mutual information rate estimate in bits per symbol.

    The outer loop draws L constrained inputs (fresh chains on per-sample
    streams), pushes them through the channel (noise streams keyed by the
    sample index only, so an SNR sweep under one seed reuses the same
    noise realizations), and averages the inner log2 p(y) estimates.
    """
    if l < 1:
        raise GridError(f"need at least one outer sample, got {l}")
    if schedule is None:
        schedule = LayerSchedule.geometric(default_layer_count(channel.snr_db))
    if burn_in is None:
        burn_in = default_burn_in(grid)
    lz2 = _resolve_log2_z_f(grid, log2_z_f)

    ens = GibbsEnsemble(
        TargetSpec(grid), [seeding.rng_for(seed, seeding.OUTER_X, e) for e in range(l)]
    )
    xs = None
    for _, _, _, cfg in ens.run(burn_in, 1, 1, with_configs=True):
        xs = cfg.copy()
    noise = np.stack(
        [
            seeding.rng_for(seed, seeding.CHANNEL_NOISE, e).standard_normal(
                (grid.m, grid.m)
            )
            for e in range(l)
        ]
    )
    ys = (1.0 - 2.0 * xs.astype(np.float64)) + channel.sigma * noise

    lls = channel.log_likelihood_tables(ys)
    inner = _inner_log_z_tilde(
        grid, lls, schedule, k_per_layer, seed, range(l), burn_in, thinning,
        collect_traces=collect_layer_traces,
    )
    log2_p = inner.log_z_tilde / LN2 - lz2
    log2_p_cond = _channel_log_weights(xs, lls) / LN2
    n = grid.n
    density = (log2_p_cond - log2_p) / n
    h_y = float(-log2_p.mean() / n)
    h_yx = conditional_entropy_rate(channel)
    rate = float(density.mean())
    stderr = float(density.std(ddof=1) / math.sqrt(l)) if l > 1 else 0.0
    counts = np.arange(1, l + 1, dtype=np.float64)
    running = np.cumsum(density) / counts
    return InfoRateResult(
        snr_db=channel.snr_db,
        m=grid.m,
        l=l,
        j=schedule.j,
        k_per_layer=k_per_layer,
        log2_p_samples=log2_p,
        log2_p_cond_samples=log2_p_cond,
        h_y_per_symbol=h_y,
        h_y_given_x_per_symbol=h_yx,
        info_rate_per_symbol=rate,
        stderr=stderr,
        running_rate=running,
        layer_traces=inner.traces,
    )
