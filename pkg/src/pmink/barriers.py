"""Explicit sub- and supersolutions with certified discrete margins.

Every construction here follows the same pattern: a closed-form candidate
shaped by a collar profile rho(d) near the boundary, free constants found
by doubling or halving until the discrete operator inequality

    sub:    det_h w  >=  RHS(x, w) - tol
    super:  det_h w  <=  RHS(x, w) + tol

holds at every masked node, with tol = 1e-6 * max|RHS|. The margins are
checked with the same monotone operator the solver uses, which is exactly
what the discrete comparison principle needs: a certified subsolution is
a pointwise lower bound for the discrete solution with the same boundary
data, and mirrored for supersolutions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (ConditionFailed, GrowthMismatch, NoAdmissibleA,
                     NoAdmissibleConstants, RegimeError, VerificationFailed)
from .grids import GridFunction
from .operator import DiscreteMAOperator
from .profiles import ProfileRho, rho_profile
from . import solver as _solver

Array = np.ndarray

TOL_FACTOR = 1e-6
MAX_DOUBLINGS = 40


# ---------------------------------------------------------------------------
# exponents


@dataclass
class ExponentTable:
    """Barrier exponents for the (p, n) regime; absent entries are None.

    eps_sub:      collar exponent n/(n+1-p) of the sublinear subsolution
    delta_flat:   half-ball exponent 2/(n+1-p), defined for p < n+1
    delta_steep:  reciprocal-power exponent n/(p-n-1), defined for p > n+1
    gamma:        (n+p+1)/2 - q for polynomially growing data
    delta_growth: (gamma-n)/(p-n-1), growth rate of the entire asymptote
    """

    p: float
    n: int
    q: float | None = None
    eps_sub: float | None = None
    delta_flat: float | None = None
    delta_steep: float | None = None
    gamma: float | None = None
    delta_growth: float | None = None


def exponent_table(p: float, n: int, q: float | None = None) -> ExponentTable:
    if p == n + 1:
        raise RegimeError(f"p = n+1 = {n + 1} is the excluded scaling-critical value")
    t = ExponentTable(p=float(p), n=int(n), q=q)
    if p < n + 1:
        t.delta_flat = 2.0 / (n + 1 - p)
        if p < 1:
            t.eps_sub = n / (n + 1.0 - p)
    else:
        t.delta_steep = n / (p - n - 1.0)
        if q is not None:
            t.gamma = (n + p + 1.0) / 2.0 - q
            t.delta_growth = (t.gamma - n) / (p - n - 1.0)
    return t


# ---------------------------------------------------------------------------
# margin verification


@dataclass
class MarginReport:
    side: str
    min_margin: float
    max_margin: float
    worst_node: int
    worst_point: tuple
    tol: float
    n_nodes: int
    passed: bool


def verify_barrier(op: DiscreteMAOperator, rhs_model, w, side: str,
                   boundary=None, tol_ineq: float | None = None) -> MarginReport:
    """Signed margin det_h(w) - RHS(x, w) over all masked nodes of op.

    w is a masked-order vector or a GridFunction on op's grid; boundary is
    the trace callable used at cut arms (defaults to the problem data
    already set on op). side is "Sub" or "Super".
    """
    if isinstance(w, GridFunction):
        w = w.values[op.mask > 0]
    w = np.asarray(w, dtype=float)
    if boundary is not None:
        op.set_boundary_values(boundary)
    det = op.ma_apply(w)
    rhs = rhs_model.values(op.nodes, w)
    margin = det - rhs
    if tol_ineq is None:
        tol_ineq = TOL_FACTOR * float(np.max(np.abs(rhs)) + 1e-300)
    if side == "Sub":
        worst = int(np.argmin(margin))
        passed = bool(margin[worst] >= -tol_ineq)
    elif side == "Super":
        worst = int(np.argmax(margin))
        passed = bool(margin[worst] <= tol_ineq)
    else:
        raise ValueError("side must be 'Sub' or 'Super'")
    return MarginReport(side=side, min_margin=float(np.min(margin)),
                        max_margin=float(np.max(margin)), worst_node=worst,
                        worst_point=tuple(op.nodes[worst]), tol=float(tol_ineq),
                        n_nodes=len(w), passed=passed)


@dataclass
class BarrierPair:
    sub: GridFunction
    super_: GridFunction
    provenance: str
    constants: dict
    sub_report: MarginReport
    super_report: MarginReport
    sub_fn: object = None
    super_fn: object = None

    @property
    def inequality_margin(self) -> float:
        return min(self.sub_report.min_margin + self.sub_report.tol,
                   self.super_report.tol - self.super_report.max_margin)

    def ordered(self, tol: float = 0.0) -> bool:
        a = self.sub.masked_values()
        b = self.super_.masked_values()
        return bool(np.all(a <= b + tol))


# ---------------------------------------------------------------------------
# shared geometry helpers


def _phi_fn(phi):
    if phi is None:
        return lambda X: np.zeros(len(np.atleast_2d(X)))
    if callable(phi):
        return lambda X, _p=phi: np.asarray(_p(np.atleast_2d(X)), dtype=float).reshape(-1)
    return lambda X, _c=float(phi): np.full(len(np.atleast_2d(X)), _c)


def _phi_grad(phi_fn, x: Array, step: float) -> Array:
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (phi_fn(x + e)[0] - phi_fn(x - e)[0]) / (2 * step)
    return g


def _distance(domain, X: Array) -> Array:
    return np.maximum(np.asarray(domain.signed_distance(np.atleast_2d(X)),
                                 dtype=float).reshape(-1), 0.0)


def _center_and_radius(domain) -> tuple[Array, float]:
    bp = domain.boundary_points(512)
    c = bp.mean(axis=0)
    return c, float(np.max(np.linalg.norm(bp - c, axis=1)))


def _collar_v(domain, profile: ProfileRho, power: float):
    """Convex v <= 0 with v = 0 on the boundary: collar profile matched
    against an interior paraboloid by pointwise max. power = 1 keeps rho
    itself; power < 1 produces the sublinear collapse rate (-rho)^power.

    Returns (v callable, constants dict)."""
    xc, D = _center_and_radius(domain)
    r0 = profile.r0
    G0 = float((-profile.rho(np.array([r0]))[0]) ** power)
    alpha = 0.5 * G0 / D**2

    def v(X, _xc=xc, _a=alpha, _G0=G0, _pw=power, _pr=profile, _dom=domain):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d = _distance(_dom, X)
        rho = _pr.rho(np.minimum(d, _pr.r0))
        collar = -((-rho) ** _pw)
        parab = -_G0 + _a * np.sum((X - _xc) ** 2, axis=1)
        return np.maximum(collar, parab)

    consts = {"G0": G0, "alpha": alpha, "center": tuple(xc), "D": D,
              "eps_cap": (2.0 * alpha) ** domain.n}
    return v, consts


def _as_grid(op: DiscreteMAOperator, fn, sign_hint: str = "Unsigned") -> GridFunction:
    return op.to_grid_function(np.asarray(fn(op.nodes), dtype=float), sign_hint)


# ---------------------------------------------------------------------------
# sublinear-range subsolution


def subsolution_p_lt_1(domain, g, p: float, phi=None, *, op: DiscreteMAOperator,
                       rhs_model=None, profile: ProfileRho | None = None,
                       max_doublings: int = MAX_DOUBLINGS):
    """Global subsolution b*(-(-rho_g)^eps) + phi for the sublinear range.

    The collar piece collapses like the eps = n/(n+1-p) power of the profile
    and is extended inward by a strictly convex paraboloid cap (pointwise
    max, so the result stays convex and keeps its boundary trace phi). The
    amplitude b doubles until the discrete margin passes. rhs_model defaults
    to the profile weight g(d(x)) itself, which dominates the true weight by
    the definition of g, so the certificate transfers.
    """
    if p >= 1:
        raise ValueError("sublinear construction needs p < 1")
    n = domain.n
    eps = exponent_table(p, n).eps_sub
    if profile is None:
        profile = rho_profile(g, domain.r0, n)
    if not profile.condition_a_finite:
        raise ConditionFailed("(a)", "collar profile rho(0+) is not finite")
    if rhs_model is None:
        rhs_model = _solver.PLessOne(
            lambda X, _g=g, _dom=domain: np.asarray(_g(np.maximum(_distance(_dom, X), 1e-300))), p)

    phi_f = _phi_fn(phi)
    v_unit, consts = _collar_v(domain, profile, eps)

    b = 1.0
    last = None
    for _ in range(max_doublings):
        def w_fn(X, _b=b):
            return _b * v_unit(X) + phi_f(X)

        rep = verify_barrier(op, rhs_model, w_fn(op.nodes), "Sub", boundary=w_fn)
        last = rep
        if rep.passed:
            gf = _as_grid(op, w_fn, "Negative")
            consts2 = dict(consts, b=b, eps=eps)
            return gf, w_fn, rep, consts2
        b *= 2.0
    raise NoAdmissibleConstants(
        f"subsolution amplitude search exhausted {max_doublings} doublings "
        f"(last margin {last.min_margin:.3e} at node {last.worst_node})")


# ---------------------------------------------------------------------------
# profile supersolutions


def _shrinking_super(domain, profile: ProfileRho, phi, rhs_model,
                     op: DiscreteMAOperator, a0: float, fixed_a: bool,
                     max_halvings: int = MAX_DOUBLINGS, distance_fn=None):
    phi_f = _phi_fn(phi)
    if distance_fn is None:
        distance_fn = lambda X: _distance(domain, X)
    a = float(a0)
    last = None
    for _ in range(1 if fixed_a else max_halvings):
        def w_fn(X, _a=a):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            d = np.maximum(np.asarray(distance_fn(X), dtype=float), 0.0)
            return _a * profile.rho(np.minimum(d, profile.r0)) + phi_f(X)

        rep = verify_barrier(op, rhs_model, w_fn(op.nodes), "Super", boundary=w_fn)
        last = rep
        if rep.passed:
            return w_fn, rep, a
        a *= 0.5
    if fixed_a:
        raise VerificationFailed(
            f"supersolution margin {last.max_margin:.3e} above {last.tol:.3e} "
            f"at node {last.worst_node} for the requested amplitude {a0:g}")
    raise NoAdmissibleConstants(
        f"supersolution amplitude search exhausted {max_halvings} halvings")


def dirichlet_supersolution(domain, g, phi=None, *, op: DiscreteMAOperator,
                            rhs_model, profile: ProfileRho | None = None):
    """Upper bound a*rho_g(min(d, r0)) + phi with a found by halving.

    The constant extension past depth r0 is C^1 because rho'(r0) = 0 and
    has zero determinant, so only the collar constrains a. Used for the
    sandwich certificate; no divergence precondition on g.
    """
    if profile is None:
        profile = rho_profile(g, domain.r0, domain.n)
    w_fn, rep, a = _shrinking_super(domain, profile, phi, rhs_model, op,
                                    a0=1.0, fixed_a=False)
    gf = _as_grid(op, w_fn, "Negative")
    return gf, w_fn, rep, {"a": a, "r0": profile.r0}


def completeness_supersolution(domain, h, phi=None, mode=("ZeroPhi",), *,
                               op: DiscreteMAOperator, rhs_model,
                               levels: int = 24, distance_fn=None,
                               r0: float | None = None):
    """Supersolution a*rho_h(min(d, r0)) + phi whose inward slope blows up.

    Precondition: int_0 h = infinity, so |D rho_h| = (int_d^{r0} h)^{1/n}
    diverges at the boundary; a solution squeezed below this barrier (same
    boundary trace) inherits the gradient blowup. mode is ("ZeroPhi",) for
    zero data with amplitude halving, or ("GeneralPhi", a) to verify a
    caller-chosen amplitude. Returns the barrier, its trace callable, the
    margin report, and a dyadic table of the collar slope a*|rho_h'(d)|.
    """
    profile = rho_profile(h, r0 if r0 is not None else domain.r0, domain.n)
    if not profile.inner_divergent:
        raise ConditionFailed(
            "(b)", "int_0 h converges, the collar slope stays bounded")
    kind = mode[0]
    if kind == "ZeroPhi":
        w_fn, rep, a = _shrinking_super(domain, profile, phi, rhs_model, op,
                                        a0=1.0, fixed_a=False,
                                        distance_fn=distance_fn)
    elif kind == "GeneralPhi":
        w_fn, rep, a = _shrinking_super(domain, profile, phi, rhs_model, op,
                                        a0=float(mode[1]), fixed_a=True,
                                        distance_fn=distance_fn)
    else:
        raise ValueError(f"unknown mode {kind!r}")

    d_tab = profile.r0 * 2.0 ** (-np.arange(levels, dtype=float))
    slope = a * np.abs(profile.drho(d_tab))
    table = np.column_stack([d_tab, slope])
    gf = _as_grid(op, w_fn, "Negative")
    meta = {"a": a, "r0": profile.r0, "slope_table": table,
            "slope_divergent": bool(profile.inner_divergent)}
    return gf, w_fn, rep, meta


# ---------------------------------------------------------------------------
# half-ball subsolution


@dataclass
class HalfBallBarrier:
    """w(x) = (|x'|^2 - A) x_n^delta on the upper half ball of radius K.

    x' is tangential, x_n the height above the boundary plane. Certified by
    sampling: min margin of det D^2 w - R_sup (-w)^(p-1) over the sample
    cloud, with the Hessian in closed form.
    """

    A: float
    delta: float
    K: float
    R_sup: float
    p: float
    n: int
    min_margin: float
    min_eigenvalue: float
    samples: int

    def __call__(self, X: Array) -> Array:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.n == 1:
            return -self.A * X[:, 0] ** self.delta
        xp2 = np.sum(X[:, :-1] ** 2, axis=1)
        return (xp2 - self.A) * X[:, -1] ** self.delta


def _half_ball_hessians(X: Array, A: float, delta: float) -> Array:
    m, n = X.shape
    xn = X[:, -1]
    H = np.zeros((m, n, n))
    if n == 1:
        H[:, 0, 0] = -A * delta * (delta - 1.0) * xn ** (delta - 2.0)
        return H
    xp = X[:, :-1]
    for i in range(n - 1):
        H[:, i, i] = 2.0 * xn**delta
        H[:, i, -1] = H[:, -1, i] = 2.0 * delta * xp[:, i] * xn ** (delta - 1.0)
    H[:, -1, -1] = delta * (delta - 1.0) * (np.sum(xp**2, axis=1) - A) * xn ** (delta - 2.0)
    return H


def urbas_subsolution(p: float, n: int, K: float = 1.0, R_sup: float = 1.0,
                      samples: int = 10_000,
                      max_doublings: int = MAX_DOUBLINGS) -> HalfBallBarrier:
    """Search the offset A for the half-ball barrier (|x'|^2 - A) x_n^delta.

    delta = 2/(n+1-p) for n >= 2. For n = 1 the tangential block is empty,
    w = -A x^delta with delta = 2/(2-p) when p < 0 (the balanced exponent)
    and delta = 1/2 otherwise. A doubles from 2K^2; the cap 1e6 K^2 raises
    NoAdmissibleA.
    """
    if p >= 1:
        raise ValueError("half-ball barrier targets the sublinear range p < 1")
    if n == 1:
        delta = 2.0 / (2.0 - p) if p < 0 else 0.5
    else:
        delta = 2.0 / (n + 1.0 - p)

    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(samples, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = K * rng.uniform(size=samples) ** (1.0 / n)
    X = dirs * r[:, None]
    X[:, -1] = np.abs(X[:, -1])
    X[:, -1] = np.maximum(X[:, -1], 1e-7 * K)

    A = 2.0 * K**2
    while A <= 1e6 * K**2:
        H = _half_ball_hessians(X, A, delta)
        det = np.linalg.det(H)
        eigs = np.linalg.eigvalsh(H)
        w = HalfBallBarrier(A=A, delta=delta, K=K, R_sup=R_sup, p=p, n=n,
                            min_margin=0.0, min_eigenvalue=float(eigs.min()),
                            samples=samples)
        vals = w(X)
        margin = det - R_sup * (-vals) ** (p - 1.0)
        w.min_margin = float(margin.min())
        if w.min_margin >= 0.0 and eigs.min() >= -1e-12 * float(np.abs(eigs).max()):
            return w
        A *= 2.0
    raise NoAdmissibleA(
        f"offset search passed 1e6 K^2 = {1e6 * K**2:g} without a certificate")


# ---------------------------------------------------------------------------
# superlinear Dirichlet barriers


def _boundary_frames(domain, count: int):
    pts = domain.boundary_points(count)
    normals = np.empty_like(pts)
    for i, x in enumerate(pts):
        normals[i] = domain.boundary_frame(x).normal
    return pts, normals  # frames carry the inward normal already


def _super_envelope(domain, p, v_unit, phi_f, rhs_model, op, n_env=64,
                    n_check=1024, max_doublings=MAX_DOUBLINGS,
                    free_dims: tuple = (), lam_free: float = 0.0,
                    wall_filter=None):
    """min over boundary samples x0 of eta*v(x) + tangent data plane + K x_n.

    K doubles until the envelope dominates phi on a fine boundary sample,
    eta halves until the discrete supersolution margin passes. Each piece
    touches phi at its own x0, so the envelope is tight there.

    On cylinders the wall is flat along the free axes, so tangent planes
    cannot dominate convex data there; each piece then carries the convex
    correction lam_free*|x_free - x0_free|^2, whose Hessian has rank below
    the dimension and keeps the piece determinant at zero. wall_filter
    restricts anchors and domination checks to the true wall; the free
    faces carry artificial data dominated by the pair ordering instead.
    """
    x0s, nus = _boundary_frames(domain, n_env)
    if wall_filter is not None:
        keep = np.asarray(wall_filter(x0s), dtype=bool)
        x0s, nus = x0s[keep], nus[keep]
    step = 1e-6 * domain.diameter()
    phis = phi_f(x0s)
    grads = np.stack([_phi_grad(phi_f, x, step) for x in x0s])

    chk, _ = _boundary_frames(domain, n_check)
    if wall_filter is not None:
        chk = chk[np.asarray(wall_filter(chk), dtype=bool)]
    phi_chk = phi_f(chk)

    free = list(free_dims)

    def envelope(X, eta, K, chunk=16384):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X))
        for lo in range(0, len(X), chunk):
            Xi = X[lo:lo + chunk]
            rel = Xi[:, None, :] - x0s[None, :, :]
            planes = (phis[None, :] + np.einsum("imk,mk->im", rel, grads)
                      + K * np.einsum("imk,mk->im", rel, nus))
            if free and lam_free > 0.0:
                planes = planes + lam_free * np.sum(rel[:, :, free] ** 2, axis=2)
            pieces = eta * v_unit(Xi)[:, None] + planes
            out[lo:lo + chunk] = pieces.min(axis=1)
        return out

    K = 1.0
    for _ in range(max_doublings):
        # v vanishes on the boundary, so domination there is K's job alone
        if np.all(envelope(chk, 0.0, K) >= phi_chk - 1e-12 * (1 + np.abs(phi_chk))):
            break
        K *= 2.0
    else:
        raise NoAdmissibleConstants("envelope slope K cannot dominate the data")

    if p >= 1:
        # each plane grows like K times the gap to its supporting hyperplane,
        # strictly positive at interior nodes of a convex domain
        for _ in range(max_doublings):
            if float(envelope(op.nodes, 0.0, K).min()) > 0.0:
                break
            K *= 2.0
        else:
            raise NoAdmissibleConstants(
                "envelope cannot be raised above zero on the interior nodes")

    eta = 1.0
    last = None
    min_phi = float(phi_chk.min())
    for _ in range(max_doublings):
        def w_fn(X, _e=eta, _K=K):
            return envelope(X, _e, _K)

        w_nodes = w_fn(op.nodes)
        if p >= 1 and float(w_nodes.min()) <= 0:
            eta *= 0.5
            continue
        rep = verify_barrier(op, rhs_model, w_nodes, "Super", boundary=w_fn)
        last = rep
        if rep.passed:
            return w_fn, rep, {"eta": eta, "K": K, "n_envelope": len(x0s),
                               "min_phi": min_phi}
        eta *= 0.5
    raise NoAdmissibleConstants(
        f"envelope amplitude search exhausted {max_doublings} halvings "
        f"(last margin {last.max_margin:.3e})")


def _free_block_bound(phi_f, pts: Array, free: list, step: float) -> float:
    """Largest eigenvalue of the free-axes Hessian block of the data,
    sampled; sets the quadratic correction of the cylinder envelope."""
    worst = 0.0
    for x in pts:
        m = len(free)
        H = np.empty((m, m))
        f0 = phi_f(x[None])[0]
        for a, i in enumerate(free):
            ei = np.zeros(len(x))
            ei[i] = step
            H[a, a] = (phi_f((x + ei)[None])[0] - 2 * f0
                       + phi_f((x - ei)[None])[0]) / step**2
            for b in range(a + 1, m):
                ej = np.zeros(len(x))
                ej[free[b]] = step
                H[a, b] = H[b, a] = (
                    phi_f((x + ei + ej)[None])[0] - phi_f((x + ei - ej)[None])[0]
                    - phi_f((x - ei + ej)[None])[0] + phi_f((x - ei - ej)[None])[0]
                ) / (4 * step**2)
        worst = max(worst, float(np.linalg.eigvalsh(H)[-1]))
    return worst


def typeI_barriers(domain, p: float, g, h, phi, *, op: DiscreteMAOperator,
                   rhs_model, max_doublings: int = MAX_DOUBLINGS,
                   free_dims: tuple = (), wall_filter=None) -> BarrierPair:
    """Barrier pair for positive boundary data in the superlinear range.

    Sub for 1 <= p < n+1: phi + A*v with v the capped collar profile of g;
    A doubles while positivity of the candidate holds. Sub for p > n+1:
    (-A rho_g + phi0^(-1/delta) + K x_n - (1/delta) phi0^(-1/delta-1)
    x.Dphi(x0))^(-delta) anchored at the boundary minimum of phi, with
    delta = n/(p-n-1). Super: min-envelope of eta*v_h + tangent planes of
    phi + K x_n over boundary samples. All constants are certified against
    the discrete operator.
    """
    n = domain.n
    if p < 1:
        raise ValueError("superlinear constructions need p >= 1")
    if p == n + 1:
        raise RegimeError(f"p = n+1 = {n + 1} is the excluded scaling-critical value")

    phi_f = _phi_fn(phi)
    prof_g = rho_profile(g, domain.r0, n)
    prof_h = rho_profile(h, domain.r0, n) if h is not None else prof_g
    if not prof_g.condition_a_finite:
        raise ConditionFailed("(a)", "collar profile rho_g(0+) is not finite")

    v_g, consts_g = _collar_v(domain, prof_g, 1.0)
    v_h, _ = _collar_v(domain, prof_h, 1.0)

    if p < n + 1:
        # The margin is checked against the same floored power model the
        # solver iterates on, so the candidate may dip nonpositive and the
        # comparison argument still applies verbatim to the discrete system.
        A = 1.0
        last = None
        sub_fn = None
        sub_rep = None
        sub_consts = {}
        for _ in range(max_doublings):
            def w_fn(X, _A=A):
                return phi_f(X) + _A * v_g(X)

            rep = verify_barrier(op, rhs_model, w_fn(op.nodes), "Sub",
                                 boundary=w_fn)
            last = rep
            if rep.passed:
                sub_fn, sub_rep = w_fn, rep
                sub_consts = dict(consts_g, A=A)
                break
            A *= 2.0
        if sub_fn is None:
            raise NoAdmissibleConstants(
                "no amplitude A gives phi + A*v a nonnegative margin "
                f"(last margin {last.min_margin if last else float('nan'):.3e})")
        provenance = "SuperlinearFlat"
    else:
        delta = n / (p - n - 1.0)
        bp, _ = _boundary_frames(domain, 256)
        i0 = int(np.argmin(phi_f(bp)))
        x0 = bp[i0]
        frame = domain.boundary_frame(x0)
        nu_in = frame.normal
        phi0 = float(phi_f(x0[None])[0])
        if phi0 <= 0:
            raise ValueError("superlinear boundary data must be positive")
        step = 1e-6 * domain.diameter()
        dphi0 = _phi_grad(phi_f, x0, step)

        sub_fn = None
        sub_rep = None
        sub_consts = {}
        last = None
        K = 1.0
        for _ in range(max_doublings):
            def base(X, _A, _K=K):
                X = np.atleast_2d(np.asarray(X, dtype=float))
                d = _distance(domain, X)
                rho = prof_g.rho(np.minimum(d, prof_g.r0))
                rel = X - x0
                return (-_A * rho + phi0 ** (-1.0 / delta) + _K * rel @ nu_in
                        - (1.0 / delta) * phi0 ** (-1.0 / delta - 1.0) * rel @ dphi0)

            # boundary domination: base >= phi^(-1/delta) on the boundary
            chk, _ = _boundary_frames(domain, 1024)
            if np.all(base(chk, 0.0) >= phi_f(chk) ** (-1.0 / delta) - 1e-12):
                break
            K *= 2.0
        else:
            raise NoAdmissibleConstants("slope K cannot dominate the data "
                                        "in the steep construction")
        A = 1.0
        for _ in range(max_doublings):
            def w_fn(X, _A=A):
                b = base(X, _A)
                return np.where(b > 0, b, np.nan) ** (-delta)

            w_nodes = w_fn(op.nodes)
            if not np.all(np.isfinite(w_nodes)):
                raise NoAdmissibleConstants("steep base lost positivity")
            rep = verify_barrier(op, rhs_model, w_nodes, "Sub", boundary=w_fn)
            last = rep
            if rep.passed:
                sub_fn, sub_rep = w_fn, rep
                sub_consts = {"A": A, "K": K, "delta": delta, "phi0": phi0,
                              "anchor": tuple(x0)}
                break
            A *= 2.0
        if sub_fn is None:
            raise NoAdmissibleConstants(
                f"steep amplitude search exhausted {max_doublings} doublings "
                f"(last margin {last.min_margin:.3e})")
        provenance = "SuperlinearSteep"

    lam_free = 0.0
    if free_dims:
        wall = domain.boundary_points(256)
        if wall_filter is not None:
            wall = wall[np.asarray(wall_filter(wall), dtype=bool)]
        lam_free = _free_block_bound(phi_f, wall[:32], list(free_dims),
                                     1e-4 * domain.diameter())
    super_fn, super_rep, super_consts = _super_envelope(
        domain, p, v_h, phi_f, rhs_model, op, max_doublings=max_doublings,
        free_dims=free_dims, lam_free=lam_free, wall_filter=wall_filter)

    pair = BarrierPair(
        sub=_as_grid(op, sub_fn, "Positive"),
        super_=_as_grid(op, super_fn, "Positive"),
        provenance=provenance,
        constants={"sub": sub_consts, "super": super_consts},
        sub_report=sub_rep, super_report=super_rep)
    pair.sub_fn = sub_fn
    pair.super_fn = super_fn
    if not pair.ordered(tol=1e-10 * (1 + float(np.abs(pair.super_.masked_values()).max()))):
        raise VerificationFailed("barrier pair is not ordered: sub > super somewhere")
    return pair


# ---------------------------------------------------------------------------
# entire asymptote for polynomially growing data


@dataclass
class PowerLawAsymptote:
    """w(x) = (1 + |x|^2)^delta scaled between mu_lo and mu_hi.

    C1 (1+t)^(n(delta-1)) <= det D^2 w <= C2 (1+t)^(n(delta-1)) with t=|x|^2,
    C1 = (2 delta)^n min(1, 2 delta - 1), C2 = (2 delta)^n max(1, 2 delta -1),
    and the scale factors solve mu^(n+1-p) = C/m against the sampled range
    [m_lo, m_hi] of f(x) (1+t)^(-q).
    """

    n: int
    p: float
    q: float
    delta: float
    gamma: float
    C1: float
    C2: float
    m_lo: float
    m_hi: float
    mu_lo: float
    mu_hi: float
    sub_margin: float
    super_margin: float

    def w(self, X: Array) -> Array:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (1.0 + np.sum(X**2, axis=1)) ** self.delta

    def sub_values(self, X: Array) -> Array:
        return self.mu_lo * self.w(X)

    def super_values(self, X: Array) -> Array:
        return self.mu_hi * self.w(X)

    def det_w(self, X: Array) -> Array:
        t = np.sum(np.atleast_2d(np.asarray(X, dtype=float)) ** 2, axis=1)
        d = self.delta
        return ((2 * d) ** self.n * (1 + t) ** (self.n * (d - 1) - 1)
                * (1 + (2 * d - 1) * t))

    def to_pair(self, op: DiscreteMAOperator, rhs_model) -> BarrierPair:
        sub_fn = lambda X: self.sub_values(X)
        super_fn = lambda X: self.super_values(X)
        sub_rep = verify_barrier(op, rhs_model, sub_fn(op.nodes), "Sub",
                                 boundary=sub_fn)
        super_rep = verify_barrier(op, rhs_model, super_fn(op.nodes), "Super",
                                   boundary=super_fn)
        pair = BarrierPair(
            sub=_as_grid(op, sub_fn, "Positive"),
            super_=_as_grid(op, super_fn, "Positive"),
            provenance="PowerLawAsymptote",
            constants={"mu_lo": self.mu_lo, "mu_hi": self.mu_hi,
                       "C1": self.C1, "C2": self.C2, "delta": self.delta,
                       "gamma": self.gamma},
            sub_report=sub_rep, super_report=super_rep)
        pair.sub_fn = sub_fn
        pair.super_fn = super_fn
        return pair


def _direction_cloud(n: int, count: int) -> Array:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.column_stack([np.cos(th), np.sin(th)])
    i = np.arange(count, dtype=float)
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    th = np.pi * (1 + 5**0.5) * i
    return np.column_stack([r * np.cos(th), r * np.sin(th), z])


def typeII_barriers(n: int, p: float, q: float, f, *, radius_max: float = 64.0,
                    n_dirs: int = 64, ratio_cap: float = 100.0) -> PowerLawAsymptote:
    """Entire power-law barriers mu*(1+|x|^2)^delta for p > n+1 and data
    growing like (1+|x|^2)^q.

    The reduced weight m(x) = f(x) (1+|x|^2)^(-q) is sampled on dyadic
    radii; GrowthMismatch when its range is wider than ratio_cap or touches
    zero (data that cannot be bounded by the assumed power). RegimeError
    when the exponent delta lands outside (1/2, 1), where the asymptote
    stops being a convex solution shape.
    """
    if p <= n + 1:
        raise RegimeError("entire power-law asymptotes need p > n+1")
    gamma = (n + p + 1.0) / 2.0 - q
    delta = (gamma - n) / (p - n - 1.0)
    if not (0.5 < delta < 1.0):
        raise RegimeError(
            f"growth exponent delta = {delta:.4g} outside (1/2, 1); the "
            f"power-law asymptote is not a convex growing solution here")

    dirs = _direction_cloud(n, n_dirs)
    radii = [0.0] + [2.0**j for j in range(int(np.log2(radius_max)) + 1)]
    pts = np.concatenate([r * dirs for r in radii])
    t = np.sum(pts**2, axis=1)
    fv = np.asarray(f(pts), dtype=float).reshape(-1)
    m = fv * (1.0 + t) ** (-q)
    m_lo, m_hi = float(m.min()), float(m.max())
    if m_lo <= 0.0 or m_hi / m_lo > ratio_cap:
        raise GrowthMismatch(
            f"reduced weight range [{m_lo:.3g}, {m_hi:.3g}] is not compatible "
            f"with growth exponent q = {q:g}")

    C1 = (2 * delta) ** n * min(1.0, 2 * delta - 1.0)
    C2 = (2 * delta) ** n * max(1.0, 2 * delta - 1.0)
    mu_hi = (C2 / m_lo) ** (1.0 / (p - n - 1.0))
    mu_lo = (C1 / m_hi) ** (1.0 / (p - n - 1.0))

    bar = PowerLawAsymptote(n=n, p=p, q=q, delta=delta, gamma=gamma, C1=C1,
                            C2=C2, m_lo=m_lo, m_hi=m_hi, mu_lo=mu_lo,
                            mu_hi=mu_hi, sub_margin=0.0, super_margin=0.0)

    # closed-form pointwise check of both inequalities on the sample cloud
    det = bar.det_w(pts)
    R = (1.0 + t) ** (-(n + p + 1.0) / 2.0) * fv
    sub_m = mu_lo**n * det - R * (mu_lo * bar.w(pts)) ** (p - 1.0)
    sup_m = mu_hi**n * det - R * (mu_hi * bar.w(pts)) ** (p - 1.0)
    bar.sub_margin = float(sub_m.min())
    bar.super_margin = float(sup_m.max())
    scale = float(np.max(R * bar.w(pts) ** (p - 1.0)))
    if bar.sub_margin < -TOL_FACTOR * scale or bar.super_margin > TOL_FACTOR * scale:
        raise VerificationFailed(
            f"power-law inequalities failed: sub {bar.sub_margin:.3e}, "
            f"super {bar.super_margin:.3e}")
    if mu_lo > mu_hi:
        raise VerificationFailed("scale factors are not ordered")
    return bar
