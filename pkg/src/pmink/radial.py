"""Radial ODE oracle for Dirichlet problems on balls with constant R.

Radial solutions of det D^2 u = RHS(u) satisfy (u'/r)^(n-1) u'' = RHS(u)
with u'(0) = 0. The oracle shoots on the center value u(0): a fourth-order
Runge-Kutta march with fixed step (1e-4 of the radius), Taylor-started off
the origin where u ~ u(0) + a r^2/2 with a^n = RHS(u(0)), then bisection
on u(0) until the boundary value matches the target to 1e-10. The boundary
value is monotone in u(0) because every RHS model is nondecreasing in u.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShootingBracketFailure
from . import solver as _solver

Array = np.ndarray

FORM_CONSTANT, FORM_P_LESS_ONE, FORM_POWER_P = 0, 1, 2
_U_FLOOR = 1e-14


def _rhs_value(u: float, form: int, R: float, p: float) -> float:
    if form == FORM_CONSTANT:
        return R
    if form == FORM_P_LESS_ONE:
        uu = u if u < -_U_FLOOR else -_U_FLOOR
        return R * (-uu) ** (p - 1.0)
    uu = u if u > _U_FLOOR else _U_FLOOR
    return R * uu ** (p - 1.0)


def _march(u0: float, radius: float, step: float, n: int, form: int,
           R: float, p: float, store_r, store_u, store_v) -> float:
    """March to the rim; returns u(radius) (linear continuation on blowup).

    When store arrays are non-empty they receive the trajectory (preallocated
    to nsteps+1)."""
    a = _rhs_value(u0, form, R, p) ** (1.0 / n)
    r = 10.0 * step
    u = u0 + 0.5 * a * r * r
    v = a * r
    nsteps = int((radius - r) / step) + 1
    h = (radius - r) / nsteps
    keep = len(store_r) > 0
    if keep:
        store_r[0] = r
        store_u[0] = u
        store_v[0] = v
    for i in range(nsteps):
        if form == FORM_P_LESS_ONE and u >= 0.0:
            return u + v * (radius - r)
        if v > 1e12:
            return u + v * (radius - r)
        # RK4 on (u, v); v' = RHS(u) (r/v)^(n-1)
        k1u = v
        k1v = _rhs_value(u, form, R, p) * (r / v) ** (n - 1)
        u2 = u + 0.5 * h * k1u
        v2 = v + 0.5 * h * k1v
        k2u = v2
        k2v = _rhs_value(u2, form, R, p) * ((r + 0.5 * h) / v2) ** (n - 1)
        u3 = u + 0.5 * h * k2u
        v3 = v + 0.5 * h * k2v
        k3u = v3
        k3v = _rhs_value(u3, form, R, p) * ((r + 0.5 * h) / v3) ** (n - 1)
        u4 = u + h * k3u
        v4 = v + h * k3v
        k4u = v4
        k4v = _rhs_value(u4, form, R, p) * ((r + h) / v4) ** (n - 1)
        u = u + h * (k1u + 2.0 * k2u + 2.0 * k3u + k4u) / 6.0
        v = v + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0
        r = r + h
        if keep:
            store_r[i + 1] = r
            store_u[i + 1] = u
            store_v[i + 1] = v
    return u


_EMPTY = np.zeros(0)

try:  # optional speedup; the pure-Python kernel is the reference
    import numba

    _rhs_value = numba.njit(cache=False)(_rhs_value)
    _march = numba.njit(cache=False)(_march)
except ImportError:
    pass


@dataclass
class RadialProfile:
    r: Array
    u: Array
    du: Array
    u0: float
    end_error: float
    form: int
    p: float
    n: int
    radius: float

    def at(self, rq: Array) -> Array:
        """Interpolated u(|x|); constant u0 inside the Taylor start radius."""
        rq = np.abs(np.asarray(rq, dtype=float))
        r0 = self.r[0]
        a = self.du[0] / r0
        taylor = self.u0 + 0.5 * a * rq**2
        interp = np.interp(rq, self.r, self.u)
        return np.where(rq < r0, taylor, interp)

    def slope_at(self, rq: Array) -> Array:
        rq = np.abs(np.asarray(rq, dtype=float))
        return np.interp(rq, self.r, self.du)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.r, self.u, self.du])
        np.savetxt(path, data, delimiter=",", header="r,u,du", comments="",
                   fmt="%.17g")


_FORM_NAMES = {
    "constant": FORM_CONSTANT,
    "p_less_one": FORM_P_LESS_ONE,
    "power_p": FORM_POWER_P,
}


def _coerce_form(rhs_form, p: float | None, R) -> tuple[int, float, float]:
    if isinstance(rhs_form, str):
        form = _FORM_NAMES[rhs_form]
        Rv = float(R)
        pv = float(p) if p is not None else 1.0
        return form, Rv, pv
    if isinstance(rhs_form, _solver.Constant):
        return FORM_CONSTANT, rhs_form.c, 1.0
    if isinstance(rhs_form, _solver.PLessOne):
        if callable(rhs_form.R):
            raise ValueError("radial oracle needs constant R")
        return FORM_P_LESS_ONE, float(rhs_form.R), rhs_form.p
    if isinstance(rhs_form, _solver.PowerP):
        if callable(rhs_form.R):
            raise ValueError("radial oracle needs constant R")
        return FORM_POWER_P, float(rhs_form.R), rhs_form.p
    raise TypeError(f"unrecognized rhs form {rhs_form!r}")


def radial_oracle(rhs_form, p: float | None = None, radius: float = 1.0,
                  n: int = 2, R=1.0, target: float = 0.0, scale: float = 1.0,
                  step_factor: float = 1e-4, end_tol: float = 1e-10,
                  max_bisect: int = 200) -> RadialProfile:
    """Shooting solution of the radial Dirichlet problem u(radius) = target.

    rhs_form: "constant" | "p_less_one" | "power_p", or an RHS model
    instance with constant R. Raises ShootingBracketFailure when no center
    value in the search bracket reaches the target (e.g. growth equations
    with no positive solution).
    """
    form, Rv, pv = _coerce_form(rhs_form, p, R)
    step = step_factor * radius

    if form == FORM_POWER_P:
        lo, hi = 1e-6 * scale, 1e3 * scale
    else:
        lo, hi = -1e3 * scale, -1e-6 * scale

    def end(u0: float) -> float:
        return _march(u0, radius, step, n, form, Rv, pv, _EMPTY, _EMPTY, _EMPTY) - target

    e_lo = end(lo)
    e_hi = end(hi)
    if not (e_lo <= 0.0 <= e_hi):
        raise ShootingBracketFailure(
            f"boundary values at bracket ends ({e_lo:.3e}, {e_hi:.3e}) do not "
            f"straddle the target {target:g}")

    best_u0, best_err = lo, abs(e_lo)
    if abs(e_hi) < best_err:
        best_u0, best_err = hi, abs(e_hi)
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        e_mid = end(mid)
        if abs(e_mid) < best_err:
            best_u0, best_err = mid, abs(e_mid)
        if best_err <= end_tol:
            break
        if e_mid <= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= np.finfo(float).eps * max(abs(lo), abs(hi)):
            break

    r_start = 10.0 * step
    nsteps = int((radius - r_start) / step) + 1
    rs = np.empty(nsteps + 1)
    us = np.empty(nsteps + 1)
    vs = np.empty(nsteps + 1)
    _march(best_u0, radius, step, n, form, Rv, pv, rs, us, vs)
    return RadialProfile(r=rs, u=us, du=vs, u0=best_u0, end_error=best_err,
                         form=form, p=pv, n=n, radius=radius)
