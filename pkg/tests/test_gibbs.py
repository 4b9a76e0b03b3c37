import itertools

import numpy as np
import pytest

from gridmc.chain import backward_filter, forward_sample
from gridmc.gibbs import (
    GibbsEnsemble,
    GibbsState,
    TargetSpec,
    default_burn_in,
    gibbs_sweep,
    initial_state,
    run_chain,
)
from gridmc.grid import (
    Configuration,
    ConstraintKind,
    GridError,
    GridSpec,
    restrict_to_strip,
)
from gridmc.seeding import rng_for

NEG_INF = float("-inf")


def enumerate_target(target):
    """All configurations with their log mass."""
    m = target.grid.m
    out = {}
    for vals in itertools.product((0, 1), repeat=m * m):
        bits = np.array(vals, dtype=np.uint8).reshape(m, m)
        out[vals] = float(target.log_mass_batch(bits[None])[0])
    return out


def marginal_over_side(target, bits, side):
    """Brute-force log sum of the target over one side's cells."""
    m = target.grid.m
    cols = target.grid.columns_of(side)
    total = NEG_INF
    for vals in itertools.product((0, 1), repeat=m * len(cols)):
        b2 = bits.copy()
        it = iter(vals)
        for c in cols:
            for r in range(m):
                b2[r, c] = next(it)
        total = np.logaddexp(total, float(target.log_mass_batch(b2[None])[0]))
    return total


def reference_sweep(grid, target, bits, rng):
    """One sweep via the single-chain engine, matching the sampler's stream order."""
    bits = bits.copy()
    for side in ("A", "B"):
        for s in grid.strips_of(side):
            chain = restrict_to_strip(
                grid, bits, s, alpha=target.alpha, channel_log=target.channel_log
            )
            msgs = backward_filter(chain)
            path, _ = forward_sample(chain, msgs, rng)
            start, w = grid.strips[s]
            for r in range(grid.m):
                for i in range(w):
                    bits[r, start + i] = (path[r] >> i) & 1
    return bits


class TestTargetSpec:
    def test_alpha_bounds(self):
        with pytest.raises(GridError):
            TargetSpec(GridSpec(2), alpha=1.5)
        with pytest.raises(GridError):
            TargetSpec(GridSpec(2), alpha=-0.1)

    def test_channel_shape_and_finiteness(self):
        g = GridSpec(2)
        with pytest.raises(GridError):
            TargetSpec(g, channel_log=np.zeros((3, 2, 2)))
        bad = np.zeros((2, 2, 2))
        bad[0, 0, 1] = NEG_INF
        with pytest.raises(GridError):
            TargetSpec(g, channel_log=bad)

    def test_strict_positivity(self):
        g = GridSpec(2)
        assert not TargetSpec(g).is_strictly_positive
        assert TargetSpec(g, alpha=0.0).is_strictly_positive
        gs = GridSpec(2, 1, ConstraintKind.smoothed(0.2))
        assert TargetSpec(gs).is_strictly_positive

    def test_log_mass_with_channel(self):
        g = GridSpec(2)
        rng = np.random.default_rng(0)
        chan = rng.normal(size=(2, 2, 2))
        t = TargetSpec(g, channel_log=chan)
        bits = np.array([[1, 0], [0, 1]], dtype=np.uint8)
        expect = chan[0, 0, 1] + chan[0, 1, 0] + chan[1, 0, 0] + chan[1, 1, 1]
        assert np.isclose(t.log_mass(Configuration(bits, g)), expect)

    def test_alpha_zero_is_uniform_mass(self):
        g = GridSpec(2)
        t = TargetSpec(g, alpha=0.0)
        bad = np.array([[1, 1], [1, 1]], dtype=np.uint8)
        assert t.log_mass(Configuration(bad, g)) == 0.0


class TestSweepCorrectness:
    def test_matches_chain_engine_route(self):
        g = GridSpec(3, 1)
        target = TargetSpec(g)
        rng1, rng2 = np.random.default_rng(42), np.random.default_rng(42)
        state = initial_state(target)
        ref = state.config.bits.copy()
        for _ in range(150):
            state = gibbs_sweep(state, target, rng1)
            ref = reference_sweep(g, target, ref, rng2)
            assert np.array_equal(state.config.bits, ref)

    def test_matches_chain_engine_route_wide_strips(self):
        g = GridSpec(5, 2)
        target = TargetSpec(g)
        rng1, rng2 = np.random.default_rng(7), np.random.default_rng(7)
        state = initial_state(target)
        ref = state.config.bits.copy()
        for _ in range(60):
            state = gibbs_sweep(state, target, rng1)
            ref = reference_sweep(g, target, ref, rng2)
            assert np.array_equal(state.config.bits, ref)

    @pytest.mark.parametrize(
        "m,w,alpha,with_chan",
        [(2, 1, 1.0, False), (3, 1, 1.0, False), (3, 2, 0.6, True), (2, 1, 0.0, True)],
    )
    def test_byproducts_match_brute_force(self, m, w, alpha, with_chan):
        kind = ConstraintKind.smoothed(0.3) if alpha not in (0.0, 1.0) else \
            ConstraintKind.rll_1inf()
        g = GridSpec(m, w, kind)
        rng = np.random.default_rng(19)
        chan = rng.normal(size=(m, m, 2)) if with_chan else None
        target = TargetSpec(g, alpha=alpha, channel_log=chan)
        state = initial_state(target)
        for i in range(12):
            prev = state.config.bits.copy()
            state = gibbs_sweep(state, target, rng)
            log_fa = marginal_over_side(target, state.config.bits, "B")
            assert np.isclose(state.log_fa, log_fa, rtol=1e-10, atol=1e-12)
            log_fb = marginal_over_side(target, prev, "A")
            assert np.isclose(state.log_fb, log_fb, rtol=1e-10, atol=1e-12)

    def test_single_cell_grid_is_fair_coin(self):
        g = GridSpec(1, 1)
        target = TargetSpec(g)
        rng = np.random.default_rng(3)
        k = 20_000
        total = 0
        state = initial_state(target)
        for _ in range(k):
            state = gibbs_sweep(state, target, rng)
            total += int(state.config.bits[0, 0])
        band = 3 * np.sqrt(0.25 / k)
        assert abs(total / k - 0.5) <= band

    def test_infeasible_state_rejected(self):
        g = GridSpec(2, 1)
        bad = Configuration(np.array([[1, 1], [0, 0]], dtype=np.uint8), g)
        from gridmc.chain import InfeasibleChainError

        with pytest.raises(InfeasibleChainError):
            gibbs_sweep(GibbsState(bad), TargetSpec(g), np.random.default_rng(0))


class TestRunChain:
    def test_exact_bookkeeping(self):
        g = GridSpec(2, 1)
        target = TargetSpec(g)
        out = list(run_chain(target, 0, 3, 1, np.random.default_rng(0)))
        assert len(out) == 3
        # same seed, no burn-in: the k-th output is the k-th sweep
        state = initial_state(target)
        rng = np.random.default_rng(0)
        for cfg, log_fa, log_fb in out:
            state = gibbs_sweep(state, target, rng)
            assert np.array_equal(cfg.bits, state.config.bits)
            assert log_fa == state.log_fa and log_fb == state.log_fb

    def test_burn_in_and_thinning(self):
        g = GridSpec(2, 1)
        target = TargetSpec(g)
        kept = list(run_chain(target, 2, 3, 3, np.random.default_rng(8)))
        # reference: sweep indices 5, 8, 11
        state = initial_state(target)
        rng = np.random.default_rng(8)
        seen = {}
        for i in range(1, 12):
            state = gibbs_sweep(state, target, rng)
            seen[i] = state.config.bits.copy()
        for got, idx in zip(kept, (5, 8, 11)):
            assert np.array_equal(got[0].bits, seen[idx])

    def test_deterministic_given_seed(self):
        g = GridSpec(3, 1)
        target = TargetSpec(g)
        a = [
            (c.bits.tobytes(), fa, fb)
            for c, fa, fb in run_chain(target, 5, 40, 2, np.random.default_rng(11))
        ]
        b = [
            (c.bits.tobytes(), fa, fb)
            for c, fa, fb in run_chain(target, 5, 40, 2, np.random.default_rng(11))
        ]
        assert a == b

    def test_feasibility_preserved(self):
        g = GridSpec(4, 2)
        target = TargetSpec(g)
        for cfg, _, _ in run_chain(target, 0, 500, 1, np.random.default_rng(21)):
            assert target.log_mass(cfg) == 0.0  # indicator: every sample valid

    def test_uniform_target_covers_everything(self):
        g = GridSpec(2, 1)
        target = TargetSpec(g, alpha=0.0)
        seen = set()
        hits = np.zeros((2, 2))
        k = 8_000
        for cfg, _, _ in run_chain(target, 0, k, 1, np.random.default_rng(2)):
            seen.add(cfg.bits.tobytes())
            hits += cfg.bits
        assert len(seen) == 16  # includes constraint-violating configurations
        band = 3 * np.sqrt(0.25 / k)
        assert np.all(np.abs(hits / k - 0.5) <= band)


class TestStationaryDistribution:
    @pytest.mark.parametrize("m", [2, 3])
    def test_tv_against_enumerated_target(self, m):
        g = GridSpec(m, 1)
        target = TargetSpec(g)
        masses = enumerate_target(target)
        live = {k: v for k, v in masses.items() if v > NEG_INF}
        z = sum(np.exp(v) for v in live.values())
        k = 100_000
        counts = dict.fromkeys(live, 0)
        for cfg, _, _ in run_chain(target, 100, k, 1, rng_for(31, 1, 0)):
            counts[tuple(cfg.bits.reshape(-1))] += 1
        tv = 0.5 * sum(
            abs(counts[key] / k - np.exp(val) / z) for key, val in live.items()
        )
        assert tv < 0.02

    def test_tv_smoothed_kernel_with_channel(self):
        g = GridSpec(2, 1, ConstraintKind.smoothed(0.25))
        rng = np.random.default_rng(4)
        chan = 0.7 * rng.normal(size=(2, 2, 2))
        target = TargetSpec(g, alpha=0.8, channel_log=chan)
        masses = enumerate_target(target)
        z = sum(np.exp(v) for v in masses.values())
        k = 60_000
        counts = dict.fromkeys(masses, 0)
        for cfg, _, _ in run_chain(target, 100, k, 1, rng_for(5, 1, 0)):
            counts[tuple(cfg.bits.reshape(-1))] += 1
        tv = 0.5 * sum(
            abs(counts[key] / k - np.exp(val) / z) for key, val in masses.items()
        )
        assert tv < 0.02


class TestEnsemble:
    def test_member_streams_are_independent_of_batch(self):
        g = GridSpec(3, 1)
        target = TargetSpec(g)
        rngs = [rng_for(5, 1, p) for p in range(3)]
        ens = GibbsEnsemble(target, rngs)
        batch = [
            (fa.copy(), fb.copy())
            for _, fa, fb in itertools.islice(ens.run(0, 50, 1), 50)
        ]
        solo = list(run_chain(target, 0, 50, 1, rng_for(5, 1, 0)))
        for i in range(50):
            assert batch[i][0][0] == solo[i][1]
            assert batch[i][1][0] == solo[i][2]

    def test_target_count_must_match_rngs(self):
        g = GridSpec(2, 1)
        with pytest.raises(GridError):
            GibbsEnsemble([TargetSpec(g)] * 2, [np.random.default_rng(0)])

    def test_mixed_channel_presence_rejected(self):
        g = GridSpec(2, 1)
        with pytest.raises(GridError):
            GibbsEnsemble(
                [TargetSpec(g), TargetSpec(g, channel_log=np.zeros((2, 2, 2)))],
                [np.random.default_rng(0), np.random.default_rng(1)],
            )

    def test_mismatched_grids_rejected(self):
        with pytest.raises(GridError):
            GibbsEnsemble(
                [TargetSpec(GridSpec(2)), TargetSpec(GridSpec(3))],
                [np.random.default_rng(0), np.random.default_rng(1)],
            )

    def test_run_validates_counts(self):
        ens = GibbsEnsemble(TargetSpec(GridSpec(2)), [np.random.default_rng(0)])
        with pytest.raises(GridError):
            list(ens.run(0, 0, 1))
        with pytest.raises(GridError):
            list(ens.run(-1, 1, 1))


def test_default_burn_in_scales_with_side():
    assert default_burn_in(GridSpec(6)) == 60
