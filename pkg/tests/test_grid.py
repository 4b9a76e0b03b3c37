import itertools

import numpy as np
import pytest

from gridmc.chain import backward_filter, chain_normalization
from gridmc.grid import (
    Configuration,
    ConstraintKind,
    GridError,
    GridSpec,
    SupportCount,
    count_support_zeroed,
    evaluate_f,
    restrict_to_strip,
)

NEG_INF = float("-inf")


def brute_force_strip_mass(grid, fixed_bits, strip):
    """Sum over strip assignments of all kernel factors touching the strip."""
    start, w = grid.strips[strip]
    m = grid.m
    lk = grid.scaled_log_kernel(1.0)
    total = NEG_INF
    for vals in itertools.product((0, 1), repeat=m * w):
        bits = np.array(fixed_bits, dtype=np.int64)
        it = iter(vals)
        for c in range(start, start + w):
            for r in range(m):
                bits[r, c] = next(it)
        mass = 0.0
        for r in range(m):
            for c in range(start, start + w):
                # intra-strip vertical
                if r + 1 < m:
                    mass += lk[bits[r, c], bits[r + 1, c]]
                # horizontal: count a pair once, if it touches the strip
                if c + 1 < m and (c + 1 < start + w or bits[r, c + 1] >= 0):
                    mass += lk[bits[r, c], bits[r, c + 1]]
            if start > 0:
                mass += lk[bits[r, start - 1], bits[r, start]]
        total = np.logaddexp(total, mass)
    return total


class TestConstraintKind:
    def test_hard_square_table(self):
        k = ConstraintKind.rll_1inf()
        assert k.table == ((1.0, 1.0), (1.0, 0.0))
        assert k.is_indicator
        lt = k.log_table()
        assert lt[1, 1] == NEG_INF
        assert lt[0, 0] == lt[0, 1] == lt[1, 0] == 0.0

    def test_symmetric(self):
        k = ConstraintKind.rll_1inf()
        assert k.table[0][1] == k.table[1][0]

    def test_negative_rejected(self):
        with pytest.raises(GridError):
            ConstraintKind("bad", ((1.0, -0.5), (1.0, 0.0)))

    def test_smoothed(self):
        k = ConstraintKind.smoothed(0.1)
        assert not k.is_indicator
        assert np.isclose(k.log_table()[1, 1], np.log(0.1))


class TestGridSpec:
    def test_cell_count(self):
        assert GridSpec(7).n == 49

    @pytest.mark.parametrize("m,w", [(5, 1), (5, 2), (5, 3), (6, 2), (60, 3), (1, 1)])
    def test_strip_partition(self, m, w):
        g = GridSpec(m, w)
        cols = []
        for start, width in g.strips:
            assert 1 <= width <= w
            cols.extend(range(start, start + width))
        assert cols == list(range(m))  # consecutive, covering, in order
        # all but the last strip take the full width
        assert all(width == w for _, width in g.strips[:-1])

    def test_sides_alternate_and_partition(self):
        g = GridSpec(5, 2)
        assert [g.side_of(i) for i in range(len(g.strips))] == ["A", "B", "A"]
        a, b = set(g.columns_of("A")), set(g.columns_of("B"))
        assert a | b == set(range(5)) and not a & b

    @pytest.mark.parametrize("m,w", [(5, 1), (6, 2), (7, 3), (60, 3)])
    def test_conditioned_graph_is_cycle_free(self, m, w):
        # two properties make each side a forest of chains once the other
        # side is fixed: same-side strips never touch (all adjacency between
        # strips crosses sides), and within a strip the only cross-row
        # kernels couple consecutive rows, so collapsing row slices leaves
        # a path
        g = GridSpec(m, w)
        col_strip = {}
        for i, (start, width) in enumerate(g.strips):
            for c in range(start, start + width):
                col_strip[c] = i
        for c in range(m - 1):
            s1, s2 = col_strip[c], col_strip[c + 1]
            if s1 != s2:
                assert g.side_of(s1) != g.side_of(s2)

    def test_width_bounds(self):
        with pytest.raises(GridError):
            GridSpec(3, 4)
        with pytest.raises(GridError):
            GridSpec(3, 0)
        with pytest.raises(GridError):
            GridSpec(0)

    def test_alpha_zero_kernel_is_flat(self):
        g = GridSpec(3)
        assert np.all(g.scaled_log_kernel(0.0) == 0.0)
        assert g.scaled_log_kernel(0.5)[1, 1] == NEG_INF


class TestConfiguration:
    def test_shape_checked(self):
        with pytest.raises(GridError):
            Configuration(np.zeros((2, 3), dtype=np.uint8), GridSpec(2))

    def test_values_checked(self):
        with pytest.raises(GridError):
            Configuration(np.full((2, 2), 3, dtype=np.uint8), GridSpec(2))

    def test_row_masks_round_trip(self):
        g = GridSpec(3)
        rng = np.random.default_rng(0)
        for _ in range(20):
            bits = rng.integers(0, 2, size=(3, 3)).astype(np.uint8)
            c = Configuration(bits, g)
            back = Configuration.from_row_masks(g, c.row_masks())
            assert np.array_equal(back.bits, bits)


class TestEvaluateF:
    def test_all_zeros_valid(self):
        g = GridSpec(2)
        assert evaluate_f(g, Configuration.zeros(g)) == 0.0

    def test_adjacent_ones_zero_mass(self):
        g = GridSpec(2)
        c = Configuration(np.array([[1, 1], [0, 0]], dtype=np.uint8), g)
        assert evaluate_f(g, c) == NEG_INF

    def test_checkerboard_valid(self):
        g = GridSpec(3)
        c = Configuration(
            np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]], dtype=np.uint8), g
        )
        assert evaluate_f(g, c) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(GridError):
            evaluate_f(GridSpec(3), Configuration.zeros(GridSpec(2)))

    def test_indicator_matches_adjacency_scan(self):
        g = GridSpec(4)
        rng = np.random.default_rng(7)
        for _ in range(200):
            bits = rng.integers(0, 2, size=(4, 4)).astype(np.uint8)
            violated = any(
                bits[r, c] and bits[r, c + 1] for r in range(4) for c in range(3)
            ) or any(
                bits[r, c] and bits[r + 1, c] for r in range(3) for c in range(4)
            )
            val = evaluate_f(g, Configuration(bits, g))
            assert val in (0.0, NEG_INF)
            assert (val == NEG_INF) == violated


class TestRestrictToStrip:
    def test_three_path_count(self):
        g = GridSpec(3, 1)
        chain = restrict_to_strip(g, np.zeros((3, 3), dtype=np.int64), 0)
        assert np.isclose(chain_normalization(backward_filter(chain)), np.log(5))

    def test_neighbor_one_kills_symbol(self):
        g = GridSpec(3, 1)
        fixed = np.zeros((3, 3), dtype=np.int64)
        fixed[1, 1] = 1  # neighbor of column-0 strip, middle row
        chain = restrict_to_strip(g, fixed, 0)
        # row 1's symbol 1 carries zero mass through the unary
        assert chain.log_potentials[0][0, 1] == NEG_INF or \
            chain.log_potentials[0][1, 1] == NEG_INF
        norm = chain_normalization(backward_filter(chain))
        assert np.isclose(norm, brute_force_strip_mass(g, fixed, 0), atol=1e-12)

    def test_two_by_two_full_strip(self):
        g = GridSpec(2, 2)
        chain = restrict_to_strip(g, np.zeros((2, 2), dtype=np.int64), 0)
        assert np.isclose(chain_normalization(backward_filter(chain)), np.log(7))

    def test_missing_neighbor_rejected(self):
        g = GridSpec(3, 1)
        fixed = np.full((3, 3), -1, dtype=np.int64)
        with pytest.raises(GridError, match="missing fixed neighbor"):
            restrict_to_strip(g, fixed, 0)

    def test_strip_index_checked(self):
        g = GridSpec(3, 1)
        with pytest.raises(GridError):
            restrict_to_strip(g, np.zeros((3, 3), dtype=np.int64), 5)

    @pytest.mark.parametrize("m,w", [(2, 1), (3, 1), (3, 2), (4, 2), (4, 3)])
    def test_normalization_matches_brute_force(self, m, w):
        g = GridSpec(m, w)
        rng = np.random.default_rng(11)
        for s in range(len(g.strips)):
            for _ in range(3):
                fixed = rng.integers(0, 2, size=(m, m)).astype(np.int64)
                chain = restrict_to_strip(g, fixed, s)
                norm = chain_normalization(backward_filter(chain, strict=False))
                expect = brute_force_strip_mass(g, fixed, s)
                if expect == NEG_INF:
                    assert norm == NEG_INF
                else:
                    assert np.isclose(norm, expect, rtol=1e-10)


class TestSupportCount:
    def test_examples(self):
        assert np.isclose(count_support_zeroed(GridSpec(3, 1), "A").value, 25)
        assert np.isclose(count_support_zeroed(GridSpec(2, 1), "A").value, 3)
        assert np.isclose(count_support_zeroed(GridSpec(1, 1), "A").value, 2)

    def test_empty_side_counts_one(self):
        # M=1 has a single A strip; the B side holds the empty assignment only
        assert np.isclose(count_support_zeroed(GridSpec(1, 1), "B").value, 1)

    def test_log2(self):
        assert np.isclose(SupportCount(np.log(8.0)).log2, 3.0)

    def test_bad_side(self):
        with pytest.raises(GridError):
            count_support_zeroed(GridSpec(2, 1), "C")

    @pytest.mark.parametrize("m,w", [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)])
    def test_matches_exhaustive_zeroed_sum(self, m, w):
        g = GridSpec(m, w)
        for side in ("A", "B"):
            cols = g.columns_of(side)
            total = 0
            for vals in itertools.product((0, 1), repeat=m * len(cols)):
                bits = np.zeros((m, m), dtype=np.uint8)
                it = iter(vals)
                for c in cols:
                    for r in range(m):
                        bits[r, c] = next(it)
                if evaluate_f(g, Configuration(bits, g)) == 0.0:
                    total += 1
            assert np.isclose(count_support_zeroed(g, side).value, total, rtol=1e-10)
