"""Quadrature helpers for integrals with a singular lower endpoint.

Everything here is deterministic: fixed Gauss panels on a dyadic partition
of (0, b], a ratio test on the dyadic terms to classify convergence, and a
geometric tail extrapolation for the convergent case.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# secondary divergence rule: partial sums past this multiple of the first term
SUM_BLOWUP_FACTOR = 1.0e6
# a dyadic ratio this close to (or above) 1 means the terms do not decay
RATIO_DIVERGENT = 1.0 - 1.0e-9


def gauss_panel(f, a: float, b: float, order: int = 16) -> tuple[float, float]:
    """Integrate f on [a, b] with fixed Gauss-Legendre panels.

    Returns (value, error_estimate); the estimate is the difference against
    a doubled-order rule on the same panel.
    """
    if b <= a:
        return 0.0, 0.0
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    out = []
    for n in (order, 2 * order):
        x, w = np.polynomial.legendre.leggauss(n)
        out.append(half * float(np.dot(w, f(mid + half * x))))
    return out[1], abs(out[1] - out[0])


@dataclass
class ImproperIntegral:
    """Result of integrating f over (0, b] with a possible singularity at 0.

    value is the dyadic sum plus the geometric tail (nan when divergent);
    terms holds the per-shell integrals, outermost shell first.
    """

    value: float
    divergent: bool
    terms: np.ndarray
    ratio: float
    tail_estimate: float
    error_estimate: float


def integrate_to_zero(f, b: float, levels: int = 48, order: int = 16) -> ImproperIntegral:
    """Integrate f over (0, b] by dyadic shells [b 2^-k-1, b 2^-k].

    The integrand may blow up at 0. Divergence is declared when the dyadic
    terms stop decaying (limiting ratio >= 1) or when the partial sums grow
    beyond SUM_BLOWUP_FACTOR times the first term.
    """
    if b <= 0:
        raise ValueError("upper limit must be positive")
    terms = np.empty(levels)
    errs = np.empty(levels)
    hi = b
    for k in range(levels):
        lo = 0.5 * hi
        terms[k], errs[k] = gauss_panel(f, lo, hi, order)
        hi = lo
    if not np.all(np.isfinite(terms)):
        # overflow in the integrand: certainly divergent
        bad = int(np.argmax(~np.isfinite(terms)))
        return ImproperIntegral(np.nan, True, terms[: bad + 1], np.inf, np.nan, np.nan)

    partial = np.cumsum(np.abs(terms))
    blown = partial[-1] > SUM_BLOWUP_FACTOR * max(abs(terms[0]), 1e-300)

    ratio = _limit_ratio(terms)
    if ratio >= RATIO_DIVERGENT or blown:
        return ImproperIntegral(np.nan, True, terms, ratio, np.nan, np.nan)

    tail = abs(terms[-1]) * ratio / (1.0 - ratio) if ratio > 0 else 0.0
    value = float(np.sum(terms)) + np.sign(terms[-1]) * tail
    err = float(np.sum(errs)) + tail * ratio  # tail model error, crude but honest
    return ImproperIntegral(value, False, terms, ratio, tail, err)


def _limit_ratio(terms: np.ndarray, window: int = 8) -> float:
    """Estimate the limiting |I_{k+1}/I_k| of the dyadic terms."""
    t = np.abs(terms)
    t = np.where(t > 0, t, 1e-300)
    r = t[1:] / t[:-1]
    if len(r) == 0:
        return 0.0
    w = r[-window:]
    # median is robust to one rough shell; the terms are eventually geometric
    return float(np.median(w))


def integrate_interval(f, a: float, b: float, rel_tol: float = 1e-9,
                       max_splits: int = 14, order: int = 16) -> tuple[float, float]:
    """Proper integral on [a, b] with panel doubling until rel_tol is met."""
    if b <= a:
        return 0.0, 0.0
    prev = None
    for k in range(3, max_splits):
        edges = np.linspace(a, b, 2**k + 1)
        vals = 0.0
        errs = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            v, e = gauss_panel(f, lo, hi, order)
            vals += v
            errs += e
        if prev is not None and abs(vals - prev) <= rel_tol * max(abs(vals), 1e-300):
            return vals, abs(vals - prev) + errs
        prev = vals
    return prev, errs
