"""Collar profiles rho(d) built from integral bounds on the curvature data.

rho(d) = -int_0^d (int_s^{r0} g(t) dt)^(1/n_eff) ds for a positive g on
(0, r0]. Both integrals may be improper at 0; panels are dyadic toward 0
with Gauss quadrature inside each panel, so integrable singularities
converge geometrically. rho(0) = 0, rho' = -(int_d^{r0} g)^(1/n_eff) <= 0,
rho'' = g(d)/n_eff * (int_d^{r0} g)^(1/n_eff - 1) >= 0, and rho'(r0) = 0,
which is what lets barrier constructions extend rho constantly past r0
without losing C^1 or convexity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import QuadratureFailure
from .quadrature import gauss_panel, integrate_to_zero, ImproperIntegral

Array = np.ndarray

LEVELS = 48
SUBS = 8          # subpanels per dyadic level for the rho tabulation
REL_TOL = 1e-9


def _gauss_nodes(order: int) -> tuple[Array, Array]:
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


_GX16, _GW16 = _gauss_nodes(16)
_GX32, _GW32 = _gauss_nodes(32)


class InnerIntegral:
    """I(s) = int_s^{r0} g(t) dt with dyadic prefix sums toward 0.

    Vectorized pointwise evaluation: panel prefix plus one Gauss panel from
    s to its level boundary. Queries below the smallest level are clamped.
    """

    def __init__(self, g, r0: float, levels: int = LEVELS):
        self.g = g
        self.r0 = float(r0)
        self.levels = levels
        self.s = r0 * 2.0 ** (-np.arange(levels + 1, dtype=float))
        panel_vals = np.empty(levels)
        panel_errs = np.empty(levels)
        for j in range(levels):
            v, e = gauss_panel(g, self.s[j + 1], self.s[j])
            panel_vals[j] = v
            panel_errs[j] = e
        self.panels = panel_vals
        self.panel_errors = panel_errs
        self.prefix = np.concatenate([[0.0], np.cumsum(panel_vals)])  # I(s[j])
        self.error_estimate = float(np.sum(np.abs(panel_errs)))
        # tail divergence: dyadic panel ratio test
        self.divergent_at_zero = bool(
            len(panel_vals) >= 9
            and np.median(panel_vals[-8:] / np.maximum(panel_vals[-9:-1], 1e-300))
            >= 1.0 - 1e-9
            and panel_vals[-1] > 0)

    def __call__(self, s: Array) -> Array:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        s = np.clip(s, self.s[-1], self.r0)
        # level j such that s in [s[j+1], s[j]]
        j = np.clip(np.floor(-np.log2(s / self.r0)).astype(int), 0, self.levels - 1)
        upper = self.s[j]
        # Gauss on [s, upper] batched over queries
        mid = 0.5 * (s + upper)
        half = 0.5 * (upper - s)
        pts = mid[:, None] + half[:, None] * _GX16[None, :]
        gv = np.asarray(self.g(pts.reshape(-1)), dtype=float).reshape(pts.shape)
        inc = half * (gv @ _GW16)
        return self.prefix[j] + inc


@dataclass
class ProfileRho:
    g: object
    r0: float
    n_eff: int
    inner: InnerIntegral
    d_tab: Array
    rho_tab: Array
    condition_a_finite: bool
    inner_divergent: bool
    outer: ImproperIntegral
    error_estimate: float

    def rho(self, d: Array) -> Array:
        """rho(d); constant continuation past r0 (C^1 since rho'(r0) = 0).

        Each query is the tabulated value at the nearest knot below plus one
        Gauss panel of rho' in the variable tau = (r0 - s)^(1/n_eff), which
        absorbs the branch point at r0. No interpolation: the result is as
        smooth as rho itself between knots, so sampled second differences
        stay convex at any grid spacing.
        """
        d = np.atleast_1d(np.asarray(d, dtype=float))
        dq = np.clip(d, 0.0, self.r0)
        out = np.empty_like(dq)
        k = np.searchsorted(self.d_tab, dq, side="right") - 1
        small = k < 0
        if np.any(small):
            out[small] = self.rho_tab[0] * dq[small] / self.d_tab[0]
        big = ~small
        if np.any(big):
            kb = k[big]
            q = 1.0 / self.n_eff
            ta = (self.r0 - self.d_tab[kb]) ** q
            tb = (self.r0 - dq[big]) ** q
            mid = 0.5 * (tb + ta)
            half = 0.5 * (ta - tb)
            pts = mid[:, None] + half[:, None] * _GX16[None, :]
            sv = np.clip(self.r0 - pts ** self.n_eff, 0.0, self.r0)
            iv = self.inner(sv.reshape(-1)).reshape(pts.shape)
            integ = self.n_eff * pts ** (self.n_eff - 1) * iv ** q
            out[big] = self.rho_tab[kb] - half * (integ @ _GW16)
        return out

    def drho(self, d: Array) -> Array:
        d = np.atleast_1d(np.asarray(d, dtype=float))
        dq = np.clip(d, 0.0, self.r0)
        val = -(self(dq) ** (1.0 / self.n_eff))
        return np.where(d >= self.r0, 0.0, val)

    def d2rho(self, d: Array) -> Array:
        d = np.atleast_1d(np.asarray(d, dtype=float))
        dq = np.clip(d, 1e-300, self.r0)
        I = self(dq)
        gv = np.asarray(self.g(dq), dtype=float)
        val = gv / self.n_eff * I ** (1.0 / self.n_eff - 1.0)
        return np.where(d >= self.r0, 0.0, val)

    def __call__(self, d: Array) -> Array:
        return self.inner(d)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.d_tab, self.rho_tab,
                                self.drho(self.d_tab), self.d2rho(self.d_tab)])
        np.savetxt(path, data, delimiter=",", header="d,rho,drho,d2rho",
                   comments="", fmt="%.17g")


def _gauss_toward_upper(f, a: float, b: float,
                        levels: int = 40) -> tuple[float, float]:
    """Integrate f on [a, b] by dyadic panels approaching b, for integrands
    with a branch point at b. Returns (value, error_estimate)."""
    L = b - a
    total = 0.0
    err = 0.0
    for j in range(levels):
        lo = b - L * 2.0 ** (-j)
        hi = b - L * 2.0 ** (-j - 1)
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        v16 = half * float(np.asarray(f(mid + half * _GX16)) @ _GW16)
        v32 = half * float(np.asarray(f(mid + half * _GX32)) @ _GW32)
        total += v32
        err += abs(v32 - v16)
    # untouched stub of length L 2^-levels; the integrand vanishes at b
    stub = L * 2.0 ** (-levels)
    err += stub * float(np.max(np.abs(np.asarray(f(np.array([b - stub, b - 0.5 * stub]))))))
    return total, err


def rho_profile(g, r0: float, n_eff: int, levels: int = LEVELS) -> ProfileRho:
    """Tabulate rho for a positive integrable-from-inside g on (0, r0].

    Reports whether rho(0+) is finite (the condition-(a) shape) and whether
    the inner integral diverges at 0. Raises QuadratureFailure when the
    nested-refinement error estimate cannot reach 1e-9 relative.
    """
    r0 = float(r0)
    inner = InnerIntegral(g, r0, levels)

    def outer_integrand(s):
        return inner(s) ** (1.0 / n_eff)

    outer = integrate_to_zero(outer_integrand, r0, levels=levels)
    condition_a = not outer.divergent

    # tabulate rho on a log-subdivided dyadic grid, accumulating upward from 0
    s_levels = r0 * 2.0 ** (-np.arange(levels + 1, dtype=float))
    d_tab = []
    for j in range(levels, 0, -1):
        lo, hi = s_levels[j], s_levels[j - 1]
        d_tab.extend(np.exp(np.linspace(np.log(lo), np.log(hi), SUBS + 1))[1:]
                     if j < levels else
                     np.exp(np.linspace(np.log(lo), np.log(hi), SUBS + 1)))
    d_tab = np.asarray(d_tab)

    rho_vals = np.empty(len(d_tab))
    # seed below the finest tabulated depth: same dyadic ladder, smaller cap
    if condition_a:
        seed = integrate_to_zero(outer_integrand, d_tab[0], levels=levels)
        rho_vals[0] = -seed.value
        err_total = seed.error_estimate
    else:
        rho_vals[0] = -outer_integrand(np.array([d_tab[0]]))[0] * d_tab[0]
        err_total = abs(rho_vals[0])
    for k in range(1, len(d_tab)):
        a, b = d_tab[k - 1], d_tab[k]
        if k == len(d_tab) - 1:
            # I(s)^(1/n) has a branch point at s = r0; approach it dyadically
            v32, dv = _gauss_toward_upper(outer_integrand, a, b)
            rho_vals[k] = rho_vals[k - 1] - v32
            err_total += dv
            continue
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        v16 = half * float(outer_integrand(mid + half * _GX16) @ _GW16)
        v32 = half * float(outer_integrand(mid + half * _GX32) @ _GW32)
        rho_vals[k] = rho_vals[k - 1] - v32
        err_total += abs(v32 - v16)

    scale = max(abs(rho_vals[-1]), 1e-300)
    err_rel = (err_total + inner.error_estimate * r0) / scale
    if condition_a and err_rel > REL_TOL:
        raise QuadratureFailure(
            f"rho tabulation error {err_rel:.2e} relative exceeds {REL_TOL:g}; "
            f"g is too singular for the dyadic panel ladder")

    return ProfileRho(g=g, r0=r0, n_eff=n_eff, inner=inner, d_tab=d_tab,
                      rho_tab=rho_vals, condition_a_finite=condition_a,
                      inner_divergent=inner.divergent_at_zero, outer=outer,
                      error_estimate=float(err_rel))
