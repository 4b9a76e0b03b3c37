"""Noiseless capacity estimation and the exact oracles backing the tests.

The Monte Carlo pipeline runs independent Gibbs sample paths on the
indicator grid and feeds the by-product strip marginals into the
reciprocal-mass estimators, giving two capacity estimates (A side and B
side) per path.  Two exact oracles cross-check each other and the MC
results at small sizes: exhaustive enumeration over all 2**N
configurations, and a row-to-row transfer operator over feasible row
states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import seeding
from .estimators import ogata_tanemura_tree
from .gibbs import GibbsEnsemble, TargetSpec, default_burn_in
from .grid import GridSpec, count_support_zeroed
from .logspace import LN2, NEG_INF, logsumexp

ENUMERATION_BUDGET_FAST = 26   # indicator kernels, bit-parallel counting
ENUMERATION_BUDGET = 20        # general kernels / channel terms
TRANSFER_BUDGET = 20           # 2**M row states


class BudgetError(RuntimeError):
    """Requested size exceeds an oracle's stated budget."""


def _horizontal_mask(m: int) -> int:
    row = (1 << (m - 1)) - 1
    mask = 0
    for r in range(m):
        mask |= row << (r * m)
    return mask


def exact_log_z_enumeration(
    grid: GridSpec,
    *,
    alpha: float = 1.0,
    channel_log: np.ndarray | None = None,
) -> float:
    """log Z by exhaustive summation over all 2**N configurations.

    Indicator kernels without channel terms are counted with bit-parallel
    feasibility tests (N <= 26); anything else evaluates the mass of every
    configuration directly (N <= 20).
    """
    m, n = grid.m, grid.n
    indicator = grid.constraint.is_indicator and alpha > 0.0
    if indicator and channel_log is None:
        if n > ENUMERATION_BUDGET_FAST:
            raise BudgetError(f"enumeration over 2**{n} exceeds the budget")
        hmask = _horizontal_mask(m)
        count = 0
        chunk = 1 << 20
        for start in range(0, 1 << n, chunk):
            x = np.arange(start, min(start + chunk, 1 << n), dtype=np.uint64)
            bad = ((x & (x >> np.uint64(1))) & np.uint64(hmask)) | (
                x & (x >> np.uint64(m))
            )
            count += int(np.count_nonzero(bad == 0))
        return float(np.log(count))

    if n > ENUMERATION_BUDGET:
        raise BudgetError(f"general enumeration over 2**{n} exceeds the budget")
    lk = grid.scaled_log_kernel(alpha)
    pairs = []
    for r in range(m):
        for c in range(m):
            if c + 1 < m:
                pairs.append((r * m + c, r * m + c + 1))
            if r + 1 < m:
                pairs.append((r * m + c, (r + 1) * m + c))
    total = NEG_INF
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        x = np.arange(start, min(start + chunk, 1 << n), dtype=np.uint64)
        bits = (x[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & np.uint64(1)
        bits = bits.astype(np.int64)
        mass = np.zeros(len(x))
        for a, b in pairs:
            mass += lk[bits[:, a], bits[:, b]]
        if channel_log is not None:
            flat = np.asarray(channel_log, dtype=np.float64).reshape(n, 2)
            mass += np.where(bits.astype(bool), flat[:, 1], flat[:, 0]).sum(axis=1)
        total = np.logaddexp(total, logsumexp(mass))
    return float(total)


def exact_log_z_transfer_matrix(grid: GridSpec) -> float:
    """log Z by iterating the row-compatibility operator over M rows.

    Row states are the 2**M bit masks without horizontally adjacent ones;
    two consecutive rows are compatible when they share no one-bit.  Works
    in plain counts with per-row rescaling tracked in log domain, since the
    counts overflow 64-bit integers near M = 20.  Indicator kernels only.
    """
    if not grid.constraint.is_indicator:
        raise BudgetError("transfer-matrix oracle supports 0/1 kernels only")
    m = grid.m
    if m > TRANSFER_BUDGET:
        raise BudgetError(f"transfer matrix over 2**{m} row states exceeds the budget")
    size = 1 << m
    states = np.arange(size, dtype=np.uint64)
    feasible = (states & (states >> np.uint64(1))) == 0
    v = feasible.astype(np.float64)
    log_scale = 0.0
    complement = (size - 1) ^ np.arange(size)
    shape = (2,) * m
    for _ in range(m - 1):
        # subset-sum (zeta) transform of v: z[mask] = sum of v over submasks
        z = v.reshape(shape).copy()
        for axis in range(m):
            idx_lo = [slice(None)] * m
            idx_hi = [slice(None)] * m
            idx_lo[axis] = 0
            idx_hi[axis] = 1
            z[tuple(idx_hi)] += z[tuple(idx_lo)]
        z = z.reshape(size)
        v = np.where(feasible, z[complement], 0.0)
        peak = v.max()
        v /= peak
        log_scale += float(np.log(peak))
    return float(np.log(v.sum()) + log_scale)


def exact_capacity_bits(grid: GridSpec) -> float:
    """Exact C_M in bits/symbol from the transfer-matrix oracle."""
    return exact_log_z_transfer_matrix(grid) / LN2 / grid.n


@dataclass(frozen=True)
class EstimatorTrace:
    """Running estimate of one estimator versus sample count."""

    estimator_id: str
    sample_index: np.ndarray
    log2_estimate: np.ndarray  # per-symbol (capacity units)
    stderr: np.ndarray


@dataclass(frozen=True)
class CapacityEstimate:
    m: int
    strip_width: int
    k: int
    paths: int
    c_bits: float                   # combined estimate, bits/symbol
    stderr: float                   # spread of per-path estimates / sqrt(count)
    per_estimate_c: np.ndarray      # (2 * paths,) A then B variant per path
    estimate_ids: tuple[str, ...]
    traces: tuple[EstimatorTrace, ...]


def _running_ot_trace(terms: np.ndarray, log_support: float, stride: int):
    """Running tree-estimator values over one stream of -log marginal terms."""
    k = np.arange(1, terms.size + 1, dtype=np.float64)
    run_sum = np.logaddexp.accumulate(terms)
    run_sq = np.logaddexp.accumulate(2.0 * terms)
    log_z = np.log(k) + log_support - run_sum
    # delta-method stderr of the log estimate, vectorized over prefixes
    log_mean = run_sum - np.log(k)
    with np.errstate(invalid="ignore", divide="ignore"):
        inner = -np.expm1(np.minimum(np.log(k) + 2 * log_mean - run_sq, 0.0))
        log_var = run_sq + np.log(inner) - np.log(np.maximum(k - 1, 1.0))
        se = np.exp(0.5 * (log_var - np.log(k)) - log_mean)
    se[0] = 0.0
    idx = np.arange(stride - 1, terms.size, stride)
    return k[idx].astype(np.int64), log_z[idx], se[idx]


def estimate_capacity(
    grid: GridSpec,
    k: int,
    paths: int,
    seed: int,
    *,
    burn_in: int | None = None,
    thinning: int = 1,
    trace_points: int = 256,
) -> CapacityEstimate:
    """Monte Carlo estimate of the noiseless capacity C_M.

    Runs ``paths`` independent Gibbs chains (each on its own derived random
    stream), collects the by-product strip marginals, and forms one A-side
    and one B-side reciprocal-mass estimate per path.  The combined value
    is the arithmetic mean of the per-path log estimates; the reported
    stderr is their spread over sqrt(count), which stays honest under
    within-path sample dependence.
    """
    if not grid.constraint.is_indicator:
        raise BudgetError("capacity estimation expects the indicator kernel")
    if burn_in is None:
        burn_in = default_burn_in(grid)
    target = TargetSpec(grid)
    rngs = [seeding.rng_for(seed, seeding.GIBBS_PATH, p) for p in range(paths)]
    ens = GibbsEnsemble(target, rngs)
    terms_a = np.empty((paths, k))
    terms_b = np.empty((paths, k))
    for i, log_fa, log_fb in ens.run(burn_in, k, thinning):
        terms_a[:, i] = -log_fa
        terms_b[:, i] = -log_fb
    log_sa = count_support_zeroed(grid, "A").log_value
    log_sb = count_support_zeroed(grid, "B").log_value

    n = grid.n
    stride = max(1, k // trace_points)
    per_c = []
    ids = []
    traces = []
    for label, terms, log_s in (("fA", terms_a, log_sa), ("fB", terms_b, log_sb)):
        for p in range(paths):
            est = ogata_tanemura_tree(-terms[p], log_s)
            per_c.append(est.log2_value / n)
            ids.append(f"path{p}.{label}")
            ks, log_z, se = _running_ot_trace(terms[p], log_s, stride)
            traces.append(
                EstimatorTrace(f"path{p}.{label}", ks, log_z / LN2 / n, se / LN2 / n)
            )
    per_c = np.array(per_c)
    c = float(per_c.mean())
    stderr = float(per_c.std(ddof=1) / np.sqrt(per_c.size)) if per_c.size > 1 else 0.0
    return CapacityEstimate(
        m=grid.m,
        strip_width=grid.strip_width,
        k=k,
        paths=paths,
        c_bits=c,
        stderr=stderr,
        per_estimate_c=per_c,
        estimate_ids=tuple(ids),
        traces=tuple(traces),
    )
