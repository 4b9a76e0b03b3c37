"""Blocked Gibbs sampling over the A/B strip partition.

One sweep redraws all A strips exactly (given B) and then all B strips
(given the new A).  Each strip draw is a backward-filter/forward-sample
pass over its row-slice chain, and the chain normalizations collected on
the way give, for free, the exact marginal mass of the conditioning side:
after the A step the product of the A-strip normalizations (times the mass
of the pairs and channel terms internal to B) equals the sum of the target
over all A assignments at the current B, and symmetrically after the B
step.  These by-product marginals drive the reciprocal-mass partition
function estimators.

The module runs many independent chains in lockstep: all strips of one
side, across all ensemble members, are filtered and sampled as one batched
array program.  Each member consumes uniforms from its own generator in a
fixed (strip, row) order per sweep, so the ensemble's numerics are
identical to running the chains one at a time, and adding members never
perturbs the streams of existing ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .chain import ROW_SUM_TOL, InfeasibleChainError
from .grid import (
    NO_NEIGHBOR,
    Configuration,
    GridError,
    GridSpec,
    StripTables,
    pair_log_mass,
    strip_tables,
    strip_unaries,
)
from .logspace import NEG_INF

_CHUNK_BYTES = 4 << 20  # uniform pre-draw buffer per member batch


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """An unnormalized distribution over grid configurations.

    The mass of x is the product of kernel values over adjacent pairs,
    raised to ``alpha`` (with 0**0 == 1, so alpha = 0 is uniform over all
    of {0,1}^N), times optional per-cell channel likelihoods
    ``channel_log[r, c, x_rc]``.  Callers temper the channel term by
    scaling the table they pass in; the kernel exponent and the channel
    exponent are therefore always chosen explicitly, never inferred.
    """

    grid: GridSpec
    alpha: float = 1.0
    channel_log: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise GridError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.channel_log is not None:
            arr = np.ascontiguousarray(self.channel_log, dtype=np.float64)
            if arr.shape != (self.grid.m, self.grid.m, 2):
                raise GridError(
                    f"channel table shape {arr.shape} must be "
                    f"({self.grid.m}, {self.grid.m}, 2)"
                )
            if not np.all(np.isfinite(arr)):
                raise GridError("channel log likelihoods must be finite")
            object.__setattr__(self, "channel_log", arr)

    @property
    def is_strictly_positive(self) -> bool:
        if self.alpha == 0.0:
            return True
        return all(v > 0.0 for row in self.grid.constraint.table for v in row)

    def log_mass_batch(self, bits: np.ndarray) -> np.ndarray:
        """Log target mass for a (B, M, M) batch of configurations."""
        bits = np.asarray(bits)
        total = pair_log_mass(self.grid.scaled_log_kernel(self.alpha), bits)
        total = np.atleast_1d(np.asarray(total, dtype=np.float64))
        if self.channel_log is not None:
            chan = np.where(
                bits.astype(bool), self.channel_log[..., 1], self.channel_log[..., 0]
            )
            total = total + chan.sum(axis=(-2, -1))
        return total

    def log_mass(self, x: Configuration) -> float:
        return float(self.log_mass_batch(x.bits[None])[0])


@dataclass
class GibbsState:
    """One chain's position: current configuration, sweep count, by-products.

    log_fa is the marginal mass of the A side at its latest draw (summed
    over B); log_fb is the marginal of the B side that the latest A step
    conditioned on, i.e. the B draw of the previous sweep.
    """

    config: Configuration
    k: int = 0
    log_fa: float | None = None
    log_fb: float | None = None


def initial_state(target: TargetSpec) -> GibbsState:
    """All-zeros start, which has positive mass under every shipped target."""
    return GibbsState(Configuration.zeros(target.grid))


def default_burn_in(grid: GridSpec) -> int:
    return 10 * grid.m


# -- sweep plan ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _StripGroup:
    side: str
    strip_ids: tuple[int, ...]
    tabs: StripTables
    cols: np.ndarray        # (S, w)
    cols_flat: np.ndarray   # (S*w,)
    left_cols: np.ndarray   # (S,); column M (the sentinel) at the grid edge
    right_cols: np.ndarray  # (S,)
    urow: int               # row offset into the per-sweep uniform block


@dataclass(frozen=True, eq=False)
class _SweepPlan:
    grid: GridSpec
    alpha: float
    log_kernel: np.ndarray
    groups: dict
    own_h_pairs: dict
    own_cols: dict
    n_strips: int

    @property
    def uniforms_per_sweep(self) -> int:
        return self.n_strips * self.grid.m


def _build_groups(grid: GridSpec, alpha: float, side: str, urow0: int):
    ids = grid.strips_of(side)
    groups = []
    i = 0
    urow = urow0
    while i < len(ids):
        w = grid.strips[ids[i]][1]
        run = [ids[i]]
        i += 1
        while i < len(ids) and grid.strips[ids[i]][1] == w:
            run.append(ids[i])
            i += 1
        cols = np.array([range(grid.strips[s][0], grid.strips[s][0] + w) for s in run])
        left = np.array(
            [grid.strips[s][0] - 1 if grid.strips[s][0] > 0 else grid.m for s in run]
        )
        right = np.array(
            [grid.strips[s][0] + w if grid.strips[s][0] + w < grid.m else grid.m
             for s in run]
        )
        groups.append(
            _StripGroup(
                side=side,
                strip_ids=tuple(run),
                tabs=strip_tables(grid.constraint, float(alpha), w),
                cols=cols,
                cols_flat=cols.reshape(-1),
                left_cols=left,
                right_cols=right,
                urow=urow,
            )
        )
        urow += len(run)
    return groups, urow


@lru_cache(maxsize=None)
def _sweep_plan(grid: GridSpec, alpha: float) -> _SweepPlan:
    groups_a, urow = _build_groups(grid, alpha, "A", 0)
    groups_b, urow = _build_groups(grid, alpha, "B", urow)
    own_h, own_c = {}, {}
    for side in ("A", "B"):
        c1, c2 = [], []
        for s in grid.strips_of(side):
            start, w = grid.strips[s]
            for c in range(start, start + w - 1):
                c1.append(c)
                c2.append(c + 1)
        own_h[side] = (np.array(c1, dtype=np.int64), np.array(c2, dtype=np.int64))
        own_c[side] = np.array(grid.columns_of(side), dtype=np.int64)
    return _SweepPlan(
        grid=grid,
        alpha=float(alpha),
        log_kernel=grid.scaled_log_kernel(alpha),
        groups={"A": tuple(groups_a), "B": tuple(groups_b)},
        own_h_pairs=own_h,
        own_cols=own_c,
        n_strips=urow,
    )


# -- batched filter / sample --------------------------------------------------


def _group_unaries(group: _StripGroup, ext: np.ndarray, chan) -> np.ndarray:
    """Log unaries (B, S, n, V) read from the sentinel-extended config array."""
    left = ext[:, :, group.left_cols].transpose(0, 2, 1)
    right = ext[:, :, group.right_cols].transpose(0, 2, 1)
    chan_g = None
    if chan is not None:
        chan_g = chan[:, :, group.cols, :].transpose(0, 2, 1, 3, 4)  # (B, S, M, w, 2)
    return strip_unaries(group.tabs, left, right, chan_g)


def _filter_group(tabs: StripTables, u: np.ndarray):
    """Backward sum-product pass over a flattened (BS, n, V) block of chains.

    Messages are kept linear with the per-position unary maxima and the
    per-step renormalizers folded into a separately accumulated log scale,
    which keeps every stored message in [0, 1] regardless of chain length
    or channel magnitudes.  Returns (msgs, rescale, eu, lognorm): msgs[k]
    times the accumulated scale is the true backward message, rescale[k]
    the divisor applied when message k was formed, eu the unit-scaled
    exponentiated unaries.
    """
    bs, n, v = u.shape
    umax = u.max(-1)  # (BS, n)
    if not np.isfinite(umax).all():
        raise InfeasibleChainError(
            "a row slice has zero mass for every symbol; the current state "
            "must have lost feasibility"
        )
    with np.errstate(under="ignore"):
        eu = np.exp(u - umax[..., None])
    msgs = np.empty((n, bs, v))
    rescale = np.empty((n, bs))  # [k] for k < n-1; the last entry is never used
    msgs[n - 1] = 1.0
    m = msgs[n - 1]
    kvt = tabs.vert_exp_t
    with np.errstate(invalid="ignore", divide="ignore", under="ignore"):
        for k in range(n - 2, -1, -1):
            t = (eu[:, k + 1] * m) @ kvt
            c = t.max(-1)
            m = t / c[:, None]
            msgs[k] = m
            rescale[k] = c
        head_sum = (eu[:, 0] * msgs[0]).sum(-1)
        lognorm = np.log(head_sum) + umax[:, 0]
        if n > 1:
            lognorm += umax[:, 1:].sum(-1) + np.log(rescale[:-1]).sum(0)
    if not np.isfinite(lognorm).all():
        raise InfeasibleChainError("restricted strip chain has zero total mass")
    return msgs, rescale, eu, lognorm


def _draw_batch(probs: np.ndarray, u: np.ndarray, totals=None) -> np.ndarray:
    """One cumulative-sum categorical draw per row; zero-mass symbols skipped."""
    c = np.cumsum(probs, axis=-1)
    target = u * (c[..., -1] if totals is None else totals)
    idx = (c <= target[..., None]).sum(-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def _sample_group(tabs: StripTables, msgs, rescale, eu, uniforms):
    """Exact forward draw of every chain in the block; returns (n, BS) symbols.

    Transition rows are potential * next message / current message; the
    stored rescale factors make every row sum to one, which is asserted.
    """
    n = eu.shape[1]
    bs, v = msgs.shape[1], msgs.shape[2]
    paths = np.empty((n, bs), dtype=np.int64)
    kv = tabs.vert_exp
    rows = np.arange(bs)
    idx = _draw_batch(eu[:, 0] * msgs[0], uniforms[:, 0])
    paths[0] = idx
    for k in range(1, n):
        p = kv[idx] * (eu[:, k] * msgs[k])
        p /= (rescale[k - 1] * msgs[k - 1][rows, idx])[:, None]
        c = np.cumsum(p, axis=-1)
        rowsum = c[:, -1]
        assert abs(rowsum - 1.0).max() <= ROW_SUM_TOL, (
            f"transition rows deviate from stochasticity by "
            f"{abs(rowsum - 1.0).max():.3e}"
        )
        idx = np.minimum((c <= (uniforms[:, k] * rowsum)[:, None]).sum(-1), v - 1)
        paths[k] = idx
    return paths


def _update_side(plan: _SweepPlan, side: str, ext, chan, uniforms) -> np.ndarray:
    b = ext.shape[0]
    m = plan.grid.m
    norms = np.zeros(b)
    for group in plan.groups[side]:
        s = len(group.strip_ids)
        u = _group_unaries(group, ext, chan).reshape(b * s, m, -1)
        msgs, rescale, eu, lognorm = _filter_group(group.tabs, u)
        norms += lognorm.reshape(b, s).sum(-1)
        block = uniforms[:, group.urow:group.urow + s, :].reshape(b * s, m)
        paths = _sample_group(group.tabs, msgs, rescale, eu, block)
        bits = group.tabs.bits[paths]                    # (n, BS, w)
        ext[:, :, group.cols_flat] = (
            bits.reshape(m, b, s * group.tabs.width).transpose(1, 0, 2)
        )
    return norms


def _side_own_mass(plan: _SweepPlan, side: str, ext, chan) -> np.ndarray:
    """Mass of pairs and channel cells entirely inside one side's strips."""
    lk = plan.log_kernel
    total = np.zeros(ext.shape[0])
    c1, c2 = plan.own_h_pairs[side]
    if c1.size:
        total += lk[ext[:, :, c1], ext[:, :, c2]].sum(axis=(1, 2))
    cols = plan.own_cols[side]
    if cols.size:
        total += lk[ext[:, :-1, cols], ext[:, 1:, cols]].sum(axis=(1, 2))
        if chan is not None:
            sub = chan[:, :, cols, :]
            picked = np.where(
                ext[:, :, cols].astype(bool), sub[..., 1], sub[..., 0]
            )
            total += picked.sum(axis=(1, 2))
    return total


def _sweep(plan: _SweepPlan, ext, chan, uniforms):
    """One full sweep (A then B) of every member; configs updated in place.

    ``ext`` is the (B, M, M+1) configuration array whose last column holds
    the boundary sentinel.  Returns (log_fa, log_fb): log_fa is the A-side
    marginal at the fresh A draw (computed from the B-strip
    normalizations), log_fb the B-side marginal the A step conditioned on
    (from the A-strip normalizations).
    """
    norms_a = _update_side(plan, "A", ext, chan, uniforms)
    log_fb = _side_own_mass(plan, "B", ext, chan) + norms_a
    norms_b = _update_side(plan, "B", ext, chan, uniforms)
    log_fa = _side_own_mass(plan, "A", ext, chan) + norms_b
    return log_fa, log_fb


# -- ensembles and the single-chain interface ---------------------------------


class GibbsEnsemble:
    """Many independent chains advanced in lockstep.

    All members share the grid geometry and kernel exponent; channel tables
    may differ per member.  Each member owns one random generator and
    consumes exactly n_strips * M uniforms per sweep (strip-major, row
    within strip), so results are reproducible per member regardless of
    ensemble size or internal buffering.
    """

    def __init__(self, targets, rngs):
        if isinstance(rngs, np.random.Generator):
            rngs = [rngs]
        self.rngs = list(rngs)
        b = len(self.rngs)
        if isinstance(targets, TargetSpec):
            targets = [targets] * b
        targets = list(targets)
        if len(targets) != b:
            raise GridError(
                f"{len(targets)} targets for {b} generators; counts must match"
            )
        base = targets[0]
        for t in targets[1:]:
            if t.grid != base.grid or t.alpha != base.alpha:
                raise GridError("ensemble members must share grid and alpha")
        self.targets = targets
        self.grid = base.grid
        self.plan = _sweep_plan(base.grid, base.alpha)
        chans = [t.channel_log for t in targets]
        if any(c is not None for c in chans):
            if any(c is None for c in chans):
                raise GridError("channel tables must be given for all members or none")
            self.chan = np.stack(chans)
        else:
            self.chan = None
        self._ext = np.zeros((b, self.grid.m, self.grid.m + 1), dtype=np.uint8)
        self._ext[:, :, self.grid.m] = NO_NEIGHBOR
        self.sweeps_done = 0
        per = self.plan.uniforms_per_sweep
        self._chunk = max(1, min(1024, _CHUNK_BYTES // (8 * per * max(b, 1))))
        self._buf = None
        self._buf_used = 0

    @property
    def configs(self) -> np.ndarray:
        """Current (B, M, M) configurations; a live view into the sampler state."""
        return self._ext[:, :, : self.grid.m]

    def _next_uniforms(self) -> np.ndarray:
        if self._buf is None or self._buf_used >= self._buf.shape[1]:
            per = self.plan.uniforms_per_sweep
            self._buf = np.stack(
                [rng.random((self._chunk, per)) for rng in self.rngs]
            )
            self._buf_used = 0
        u = self._buf[:, self._buf_used, :]
        self._buf_used += 1
        return u.reshape(len(self.rngs), self.plan.n_strips, self.grid.m)

    def sweep(self):
        """Advance every member one full sweep; returns (log_fa, log_fb)."""
        out = _sweep(self.plan, self._ext, self.chan, self._next_uniforms())
        self.sweeps_done += 1
        return out

    def run(self, burn_in: int, k: int, thinning: int = 1, with_configs: bool = False):
        """Yield k post-burn-in, thinned sweeps as (index, log_fa, log_fb).

        With with_configs=True each yield carries a read-only view of the
        current (B, M, M) configuration array as a fourth element; copy it
        before the next iteration step if it must persist.
        """
        if k < 1:
            raise GridError(f"sample count must be >= 1, got {k}")
        if burn_in < 0 or thinning < 1:
            raise GridError("burn_in must be >= 0 and thinning >= 1")
        emitted = 0
        sweep_idx = 0
        while emitted < k:
            log_fa, log_fb = self.sweep()
            sweep_idx += 1
            if sweep_idx > burn_in and (sweep_idx - burn_in) % thinning == 0:
                if with_configs:
                    view = self._ext[:, :, : self.grid.m]
                    view.flags.writeable = False
                    yield emitted, log_fa, log_fb, view
                else:
                    yield emitted, log_fa, log_fb
                emitted += 1


def gibbs_sweep(state: GibbsState, target: TargetSpec, rng: np.random.Generator) -> GibbsState:
    """One full sweep of a single chain.

    Consumes the same uniform stream, in the same order, as one ensemble
    member, so a sequence of gibbs_sweep calls reproduces an ensemble run
    bit for bit.
    """
    if target.log_mass(state.config) == NEG_INF:
        raise InfeasibleChainError("state has zero target mass")
    plan = _sweep_plan(target.grid, target.alpha)
    m = target.grid.m
    ext = np.empty((1, m, m + 1), dtype=np.uint8)
    ext[0, :, :m] = state.config.bits
    ext[:, :, m] = NO_NEIGHBOR
    chan = None if target.channel_log is None else target.channel_log[None]
    u = rng.random(plan.uniforms_per_sweep).reshape(1, plan.n_strips, m)
    log_fa, log_fb = _sweep(plan, ext, chan, u)
    return GibbsState(
        Configuration(ext[0, :, :m].copy(), target.grid),
        k=state.k + 1,
        log_fa=float(log_fa[0]),
        log_fb=float(log_fb[0]),
    )


def run_chain(
    target: TargetSpec,
    burn_in: int,
    k: int,
    thinning: int,
    rng: np.random.Generator,
):
    """Stream k thinned post-burn-in samples with their by-product marginals.

    Deterministic given the generator state; yields
    (Configuration, log_fa, log_fb) tuples.
    """
    ens = GibbsEnsemble(target, [rng])
    for _, log_fa, log_fb, cfg in ens.run(burn_in, k, thinning, with_configs=True):
        yield (
            Configuration(cfg[0].copy(), target.grid),
            float(log_fa[0]),
            float(log_fb[0]),
        )
