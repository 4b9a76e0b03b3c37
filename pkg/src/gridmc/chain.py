"""Exact inference and sampling on finite-alphabet chains.

A chain of length n with pairwise log potentials g_k(x_{k-1}, x_k) (and an
optional unary at position 1) is filtered backward with sum-product
messages; the messages yield the chain's normalization constant and exact
forward sampling of whole paths.  Messages are max-normalized per position
with the subtracted scale accumulated separately, so the normalization
constant stays exact while the message magnitudes stay O(1) over long
chains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .logspace import NEG_INF, logsumexp

ROW_SUM_TOL = 1e-12


class InfeasibleChainError(RuntimeError):
    """No path through the chain carries positive mass."""


@dataclass
class ChainModel:
    """p(x) proportional to unary1(x_1) * prod_k g_k(x_{k-1}, x_k).

    log_potentials[i] couples positions i and i+1 (0-indexed) and has shape
    (alphabet(i), alphabet(i+1)).  log_unary1 defaults to uniform.
    """

    log_potentials: tuple[np.ndarray, ...]
    log_unary1: np.ndarray | None = None

    def __post_init__(self):
        self.log_potentials = tuple(
            np.ascontiguousarray(p, dtype=np.float64) for p in self.log_potentials
        )
        for i, p in enumerate(self.log_potentials):
            if p.ndim != 2:
                raise ValueError(f"potential {i} must be 2-D, got shape {p.shape}")
            if np.any(np.isnan(p)):
                raise ValueError(f"potential {i} contains NaN")
            if i > 0 and p.shape[0] != self.log_potentials[i - 1].shape[1]:
                raise ValueError(
                    f"potential {i} first dim {p.shape[0]} does not match "
                    f"previous second dim {self.log_potentials[i - 1].shape[1]}"
                )
        if not self.log_potentials and self.log_unary1 is None:
            raise ValueError("a length-1 chain requires an explicit log_unary1")
        first = self.alphabet_sizes[0]
        if self.log_unary1 is None:
            self.log_unary1 = np.zeros(first)
        else:
            self.log_unary1 = np.ascontiguousarray(self.log_unary1, dtype=np.float64)
            if self.log_unary1.shape != (first,):
                raise ValueError(
                    f"unary1 shape {self.log_unary1.shape} does not match "
                    f"first alphabet {first}"
                )

    @property
    def n(self) -> int:
        return len(self.log_potentials) + 1

    @property
    def alphabet_sizes(self) -> tuple[int, ...]:
        if not self.log_potentials:
            return (len(self.log_unary1),)
        sizes = [self.log_potentials[0].shape[0]]
        sizes.extend(p.shape[1] for p in self.log_potentials)
        return tuple(sizes)


@dataclass
class BackwardMessages:
    """Backward sum-product messages, max-normalized per position.

    The true log message at position k is logs[k] + shifts[k]; the final
    message (position n-1) is identically one.  log_norm is the total log
    mass of the chain, i.e. the log of the unary-weighted sum of the
    position-1 message, which equals log sum_x of the chain's product.
    """

    logs: tuple[np.ndarray, ...]
    shifts: np.ndarray
    log_norm: float

    @property
    def n(self) -> int:
        return len(self.logs)

    @property
    def feasible(self) -> bool:
        return self.log_norm > NEG_INF


def backward_filter(chain: ChainModel, *, strict: bool = True) -> BackwardMessages:
    """Run the backward recursion over the chain.

    With strict=True (default) an infeasible chain (some position's message
    entirely zero, or zero total mass) raises InfeasibleChainError.  With
    strict=False the messages are returned as-is and the normalization is
    -inf, which callers that only need the mass of a possibly-empty support
    can consume directly.
    """
    n = chain.n
    logs: list[np.ndarray] = [np.zeros(chain.alphabet_sizes[-1])]
    shifts = np.zeros(n)
    for k in range(n - 2, -1, -1):
        t = chain.log_potentials[k] + logs[-1][None, :]
        m = t.max(axis=1)
        msafe = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            raw = msafe + np.log(np.exp(t - msafe[:, None]).sum(axis=1))
        c = raw.max()
        if c == NEG_INF:
            if strict:
                raise InfeasibleChainError(
                    f"all backward messages vanish at position {k}"
                )
            logs.append(raw)
            shifts[k] = shifts[k + 1]
        else:
            logs.append(raw - c)
            shifts[k] = shifts[k + 1] + c
    logs.reverse()
    head = chain.log_unary1 + logs[0]
    log_norm = logsumexp(head)
    log_norm = log_norm + shifts[0] if log_norm > NEG_INF else NEG_INF
    if strict and log_norm == NEG_INF:
        raise InfeasibleChainError("chain has zero total mass")
    return BackwardMessages(tuple(logs), shifts, float(log_norm))


def chain_normalization(msgs: BackwardMessages) -> float:
    """Total log mass of the chain: the unary-weighted sum of the first message."""
    return msgs.log_norm


def _categorical(probs: np.ndarray, u: float) -> int:
    """Index with cumulative mass exceeding u * total; zero-mass symbols skipped."""
    c = np.cumsum(probs)
    idx = int(np.searchsorted(c, u * c[-1], side="right"))
    return min(idx, len(probs) - 1)


def forward_sample(
    chain: ChainModel, msgs: BackwardMessages, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Draw one exact path from the chain's normalized distribution.

    Returns the path and its unnormalized log mass.  Each transition row
    (potential times next message over current message) must sum to one
    within ROW_SUM_TOL, which is asserted.  Consumes exactly n uniforms,
    one per position, in position order.
    """
    if not msgs.feasible:
        raise InfeasibleChainError("cannot sample from a zero-mass chain")
    n = chain.n
    path = np.zeros(n, dtype=np.int64)
    head = chain.log_unary1 + msgs.logs[0]
    m = head.max()
    probs = np.exp(head - m)
    path[0] = _categorical(probs, rng.random())
    logweight = float(chain.log_unary1[path[0]])
    for k in range(1, n):
        t = chain.log_potentials[k - 1][path[k - 1], :] + msgs.logs[k]
        t = t + (msgs.shifts[k] - msgs.shifts[k - 1])
        t = t - msgs.logs[k - 1][path[k - 1]]
        probs = np.exp(t)
        s = probs.sum()
        assert abs(s - 1.0) <= ROW_SUM_TOL, f"transition row sums to {s!r}"
        path[k] = _categorical(probs, rng.random())
        logweight += float(chain.log_potentials[k - 1][path[k - 1], path[k]])
    return path, logweight


def transition_probabilities(
    chain: ChainModel, msgs: BackwardMessages
) -> list[np.ndarray]:
    """Row-stochastic transition matrices induced by the backward messages.

    Entry [k-1][a, b] is p(x_k = b | x_{k-1} = a); rows whose state carries
    zero backward mass are all zero (unreachable).
    """
    out = []
    for k in range(1, chain.n):
        t = chain.log_potentials[k - 1] + msgs.logs[k][None, :]
        t = t + (msgs.shifts[k] - msgs.shifts[k - 1])
        cur = msgs.logs[k - 1]
        rows = np.zeros_like(t)
        reachable = cur > NEG_INF
        rows[reachable] = np.exp(t[reachable] - cur[reachable][:, None])
        out.append(rows)
    return out
