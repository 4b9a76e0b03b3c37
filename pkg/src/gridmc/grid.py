"""The 2-D constrained grid model.

An M-by-M grid of binary cells carries a pairwise kernel on every
horizontally and vertically adjacent pair (free boundary, no wraparound).
The product of kernel values over all adjacent pairs defines the grid
function f; for the shipped no-adjacent-ones kernel f is the indicator of
the hard-square constraint and the partition function counts the valid
configurations.

Columns are partitioned into consecutive vertical strips of a configured
width (the last strip takes the remainder).  Alternating strips are labeled
A and B; with one side held fixed, each strip of the other side reduces to
a chain over its row slices, which is what makes exact conditional sampling
possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .chain import ChainModel, backward_filter, chain_normalization
from .logspace import LN2, NEG_INF


class GridError(ValueError):
    """Invalid grid geometry, kernel, or configuration input."""


@dataclass(frozen=True)
class ConstraintKind:
    """A pairwise kernel on {0,1} x {0,1}, stored as linear values.

    ``table[a][b]`` is the nonnegative weight of an adjacent pair taking
    values (a, b).  The shipped kernel forbids adjacent ones:
    table[1][1] = 0, all other entries 1.
    """

    name: str
    table: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self):
        for row in self.table:
            for v in row:
                if not (v >= 0.0) or not np.isfinite(v):
                    raise GridError(f"kernel values must be finite and >= 0, got {v}")

    @classmethod
    def rll_1inf(cls) -> "ConstraintKind":
        """No two adjacent cells may both be 1 (hard squares)."""
        return cls("rll_1inf", ((1.0, 1.0), (1.0, 0.0)))

    @classmethod
    def smoothed(cls, eps: float) -> "ConstraintKind":
        """Strictly positive relaxation: adjacent ones weigh eps instead of 0."""
        if not eps > 0.0:
            raise GridError("smoothed kernel needs eps > 0")
        return cls(f"smoothed_{eps:g}", ((1.0, 1.0), (1.0, float(eps))))

    @property
    def is_indicator(self) -> bool:
        return all(v in (0.0, 1.0) for row in self.table for v in row)

    def log_table(self) -> np.ndarray:
        out = np.empty((2, 2))
        for a in (0, 1):
            for b in (0, 1):
                v = self.table[a][b]
                out[a, b] = np.log(v) if v > 0.0 else NEG_INF
        return out


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the grid: side length, kernel, and strip width."""

    m: int
    strip_width: int = 1
    constraint: ConstraintKind = field(default_factory=ConstraintKind.rll_1inf)

    def __post_init__(self):
        if self.m < 1:
            raise GridError(f"m must be >= 1, got {self.m}")
        if not 1 <= self.strip_width <= self.m:
            raise GridError(
                f"strip_width must be in [1, m={self.m}], got {self.strip_width}"
            )

    @property
    def n(self) -> int:
        return self.m * self.m

    @property
    def strips(self) -> tuple[tuple[int, int], ...]:
        """(start_column, width) per strip, left to right; last takes the remainder."""
        out = []
        c = 0
        while c < self.m:
            w = min(self.strip_width, self.m - c)
            out.append((c, w))
            c += w
        return tuple(out)

    def side_of(self, strip: int) -> str:
        return "A" if strip % 2 == 0 else "B"

    def strips_of(self, side: str) -> tuple[int, ...]:
        if side not in ("A", "B"):
            raise GridError(f"side must be 'A' or 'B', got {side!r}")
        return tuple(i for i in range(len(self.strips)) if self.side_of(i) == side)

    def columns_of(self, side: str) -> tuple[int, ...]:
        cols = []
        for i in self.strips_of(side):
            start, w = self.strips[i]
            cols.extend(range(start, start + w))
        return tuple(cols)

    def scaled_log_kernel(self, alpha: float = 1.0) -> np.ndarray:
        """Log kernel raised to ``alpha``, with the 0**0 == 1 convention.

        At alpha == 0 every entry becomes log 1 = 0, including entries whose
        linear value is 0, so the tempered function is uniform over all
        configurations.
        """
        if alpha == 0.0:
            return np.zeros((2, 2))
        return alpha * self.constraint.log_table()


@dataclass
class Configuration:
    """One assignment of all N cells, stored as an (M, M) 0/1 array.

    Indexing is row-major: bits[r, c] is the cell in row r, column c.
    """

    bits: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if self.bits.shape != (self.grid.m, self.grid.m):
            raise GridError(
                f"configuration shape {self.bits.shape} does not match "
                f"grid {self.grid.m}x{self.grid.m}"
            )
        if not np.all((self.bits == 0) | (self.bits == 1)):
            raise GridError("configuration bits must be 0 or 1")

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Configuration":
        return cls(np.zeros((grid.m, grid.m), dtype=np.uint8), grid)

    @classmethod
    def from_row_masks(cls, grid: GridSpec, masks) -> "Configuration":
        bits = np.zeros((grid.m, grid.m), dtype=np.uint8)
        for r, mask in enumerate(masks):
            for c in range(grid.m):
                bits[r, c] = (int(mask) >> c) & 1
        return cls(bits, grid)

    def row_masks(self) -> list[int]:
        """Bit-packed rows: bit c of mask r is bits[r, c]."""
        return [int(sum(int(b) << c for c, b in enumerate(row))) for row in self.bits]

    def copy(self) -> "Configuration":
        return Configuration(self.bits.copy(), self.grid)


@dataclass(frozen=True)
class SupportCount:
    """A nonnegative count carried in log domain (value = exp(log_value))."""

    log_value: float

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))

    @property
    def log2(self) -> float:
        return self.log_value / LN2


def pair_log_mass(log_kernel: np.ndarray, bits: np.ndarray) -> np.ndarray | float:
    """Sum of log kernel values over all adjacent pairs.

    ``bits`` has shape (..., M, M); the result drops the last two axes.
    """
    bits = np.asarray(bits)
    h = log_kernel[bits[..., :, :-1], bits[..., :, 1:]].sum(axis=(-2, -1))
    v = log_kernel[bits[..., :-1, :], bits[..., 1:, :]].sum(axis=(-2, -1))
    total = h + v
    return float(total) if total.ndim == 0 else total


def evaluate_f(grid: GridSpec, x: Configuration) -> float:
    """Log of the product of kernel values over all adjacent pairs of x.

    For the indicator kernel this is 0.0 (f = 1) on valid configurations
    and -inf (f = 0) otherwise.
    """
    if x.grid.m != grid.m:
        raise GridError(
            f"configuration is {x.grid.m}x{x.grid.m}, grid is {grid.m}x{grid.m}"
        )
    return pair_log_mass(grid.scaled_log_kernel(1.0), x.bits)


# -- strip-to-chain reduction ------------------------------------------------
#
# A strip of width w becomes a chain over M row slices with alphabet 2**w.
# Bit i of a symbol is the cell in the strip's i-th column (LSB = leftmost).
# Horizontal kernels inside a row slice and kernels coupling the slice to the
# fixed neighbor columns enter as per-position unaries; vertical kernels
# between consecutive row slices are the pairwise chain potentials.

NO_NEIGHBOR = 2  # neighbor-value code for strips at the grid boundary


@dataclass(frozen=True)
class StripTables:
    width: int
    n_symbols: int
    bits: np.ndarray        # (V, w) uint8, bit i of symbol v
    intra_row: np.ndarray   # (V,) horizontal mass inside one row slice
    vert: np.ndarray        # (V, V) vertical mass between consecutive slices
    left: np.ndarray        # (3, V) coupling to the fixed left neighbor (code 2 = none)
    right: np.ndarray       # (3, V) coupling to the fixed right neighbor
    lr: np.ndarray          # (3, 3, V) intra_row + left + right, fused
    vert_exp: np.ndarray    # (V, V) exp(vert)
    vert_exp_t: np.ndarray  # transposed copy for message products


@lru_cache(maxsize=None)
def strip_tables(constraint: ConstraintKind, alpha: float, width: int) -> StripTables:
    if alpha == 0.0:
        lk = np.zeros((2, 2))
    else:
        lk = alpha * constraint.log_table()
    nsym = 1 << width
    bits = np.zeros((nsym, width), dtype=np.uint8)
    for v in range(nsym):
        for i in range(width):
            bits[v, i] = (v >> i) & 1
    intra = np.zeros(nsym)
    for i in range(width - 1):
        intra += lk[bits[:, i], bits[:, i + 1]]
    vert = np.zeros((nsym, nsym))
    for i in range(width):
        vert += lk[bits[:, i][:, None], bits[:, i][None, :]]
    left = np.zeros((3, nsym))
    right = np.zeros((3, nsym))
    for a in (0, 1):
        left[a] = lk[a, bits[:, 0]]
        right[a] = lk[bits[:, -1], a]
    lr = (intra + left[:, None, :]) + right[None, :, :]
    with np.errstate(under="ignore"):
        vert_exp = np.exp(vert)
    return StripTables(
        width, nsym, bits, intra, vert, left, right,
        lr, vert_exp, np.ascontiguousarray(vert_exp.T),
    )


def strip_unaries(
    tabs: StripTables,
    left_codes: np.ndarray,
    right_codes: np.ndarray,
    chan: np.ndarray | None = None,
) -> np.ndarray:
    """Per-position unary log mass of a strip chain.

    left_codes/right_codes: (..., n) neighbor values in {0, 1, NO_NEIGHBOR}.
    chan: optional (..., n, w, 2) per-cell log likelihoods.
    Returns (..., n, V).
    """
    u = tabs.lr[left_codes, right_codes]
    if chan is not None:
        b = tabs.bits.astype(np.float64)
        u = u + chan[..., 0] @ (1.0 - b.T) + chan[..., 1] @ b.T
    return u


def _fixed_bits(fixed) -> np.ndarray:
    if isinstance(fixed, Configuration):
        return fixed.bits.astype(np.int64)
    arr = np.asarray(fixed, dtype=np.int64)
    return arr


def restrict_to_strip(
    grid: GridSpec,
    fixed,
    strip: int,
    *,
    alpha: float = 1.0,
    channel_log: np.ndarray | None = None,
) -> ChainModel:
    """Chain over the row slices of one strip, with the rest of the grid fixed.

    ``fixed`` is a Configuration or an (M, M) integer array; entries may be -1
    (unassigned) anywhere except in the columns adjacent to the strip.  The
    chain's total mass equals the sum, over all strip assignments, of the
    product of all kernels with at least one endpoint in the strip (plus the
    strip cells' channel terms when ``channel_log`` is given).
    """
    if not 0 <= strip < len(grid.strips):
        raise GridError(f"strip index {strip} out of range")
    start, w = grid.strips[strip]
    bits = _fixed_bits(fixed)
    if bits.shape != (grid.m, grid.m):
        raise GridError(f"fixed assignment shape {bits.shape} does not match grid")

    def neighbor_codes(col: int) -> np.ndarray:
        if col < 0 or col >= grid.m:
            return np.full(grid.m, NO_NEIGHBOR, dtype=np.int64)
        vals = bits[:, col]
        if np.any(vals < 0):
            rows = np.nonzero(vals < 0)[0]
            raise GridError(
                f"missing fixed neighbor value at (row {rows[0]}, col {col})"
            )
        return vals

    left = neighbor_codes(start - 1)
    right = neighbor_codes(start + w)
    tabs = strip_tables(grid.constraint, float(alpha), w)
    chan = None
    if channel_log is not None:
        chan = np.asarray(channel_log, dtype=np.float64)[:, start:start + w, :]
    u = strip_unaries(tabs, left, right, chan)
    potentials = [tabs.vert + u[k][None, :] for k in range(1, grid.m)]
    return ChainModel(log_potentials=tuple(potentials), log_unary1=u[0])


def count_support_zeroed(grid: GridSpec, side: str) -> SupportCount:
    """Sum of f over one side's cells with the other side all zero.

    Strips of a side never touch each other, and an all-zero complement
    contributes unit kernel factors, so the sum factorizes over the side's
    strips; each factor is one chain normalization.  For a 0/1 kernel this
    equals the support size of the marginal on that side.
    """
    zeros = np.zeros((grid.m, grid.m), dtype=np.int64)
    total = 0.0
    for s in grid.strips_of(side):
        chain = restrict_to_strip(grid, zeros, s)
        total += chain_normalization(backward_filter(chain))
    return SupportCount(total)
