"""Log-domain arithmetic helpers.

Every mass, message, and partition quantity in this package is carried as a
natural logarithm, with ``-inf`` encoding exact zero mass.  Products over
thousands of factors (a 60x60 grid has a partition function near 2**2129)
underflow any linear float representation, so the log form is mandatory,
not an optimization.
"""

from __future__ import annotations

import numpy as np

NEG_INF = float("-inf")

LN2 = float(np.log(2.0))


def logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """log(sum(exp(a))) along ``axis``, safe for -inf entries.

    An all ``-inf`` slice yields ``-inf`` without warnings or NaNs.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError("logsumexp of an empty array")
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    out = s + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def log_mean(log_terms: np.ndarray) -> float:
    """log of the arithmetic mean of exp(log_terms)."""
    log_terms = np.asarray(log_terms, dtype=np.float64)
    if log_terms.size == 0:
        raise ValueError("log_mean of an empty sample")
    return float(logsumexp(log_terms) - np.log(log_terms.size))


def running_logsumexp(log_terms: np.ndarray, axis: int = -1) -> np.ndarray:
    """Prefix log-sums: out[..., k] = logsumexp(log_terms[..., :k+1])."""
    return np.logaddexp.accumulate(log_terms, axis=axis)


def log_to_bits(log_value: float) -> float:
    """Convert a natural-log quantity to base-2 (bits)."""
    return log_value / LN2


def bits_to_log(bits: float) -> float:
    return bits * LN2
