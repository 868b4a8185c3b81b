"""Integral solvability criteria and problem classification.

A ProblemSpec is classified before any solve. Nonexistence rules refuse
problems whose data makes a complete convex solution impossible; the
integral conditions (a)/(b) gate the collar behavior of the data envelopes;
the asymptotic mass integral decides whether zero boundary data is forced;
and polynomially growing data is checked against its assumed power law.

All improper integrals are evaluated with dyadic panels toward the singular
set and a ratio test on the panel sums; "divergent" is an operational
verdict about those partial sums, reported as numerical, never symbolic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domains import mu, plane_to_sphere
from .errors import ConditionFailed, MissingBounds, NonexistentByLemma
from .profiles import InnerIntegral
from .quadrature import integrate_to_zero, _limit_ratio, \
    SUM_BLOWUP_FACTOR, RATIO_DIVERGENT
from . import solver as _solver

Array = np.ndarray

CASES = ("PLessOne", "TypeI", "TypeII", "TypeIII")


# ---------------------------------------------------------------------------
# problem description


@dataclass
class ProblemSpec:
    """Everything needed to pose one boundary-value problem.

    curvature is the prescribed positive weight: the normalized data f-hat
    in the sublinear case p < 1, the reciprocal p-curvature f elsewhere.
    boundary is a planar callable/scalar, or ("spherical", Phi) converted
    to planar data via phi = mu * Phi on evaluation. sign_hint names the
    sign of the support function being sought.
    """

    p: float
    n: int
    case: str
    domain: object = None
    curvature: object = 1.0
    sign_hint: str = "Negative"
    boundary: object = 0.0
    g: object = None
    h: object = None
    r0: float | None = None
    C: float | None = None
    q: float | None = None
    m_free: int = 0
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; expected one of {CASES}")
        p, n = self.p, self.n
        if self.case == "PLessOne" and not p < 1:
            raise ValueError("PLessOne requires p < 1")
        if self.case == "TypeI" and not (p >= 1 and p != n + 1):
            raise ValueError("TypeI requires p >= 1 and p != n+1")
        if self.case == "TypeII" and not p > n + 1:
            raise ValueError("TypeII requires p > n+1")
        if self.case == "TypeIII":
            if not (1 <= self.m_free < n):
                raise ValueError("TypeIII requires 1 <= m < n free directions")
            if not (p >= 1 and p != n + 1):
                raise ValueError("TypeIII requires p >= 1 and p != n+1")
        if self.case in ("PLessOne", "TypeI") and self.domain is not None:
            if not getattr(self.domain, "bounded", True):
                raise ValueError(f"{self.case} requires a bounded domain")
        if self.r0 is None and self.domain is not None and \
                getattr(self.domain, "bounded", False):
            self.r0 = self.domain.r0
        # scalar envelopes mean constant collar bounds
        if self.g is not None and not callable(self.g):
            self.g = (lambda t, _c=float(self.g):
                      _c * np.ones_like(np.asarray(t, dtype=float)))
        if self.h is not None and not callable(self.h):
            self.h = (lambda t, _c=float(self.h):
                      _c * np.ones_like(np.asarray(t, dtype=float)))

    @property
    def n_eff(self) -> int:
        return self.n - self.m_free if self.case == "TypeIII" else self.n

    def curvature_values(self, X: Array) -> Array:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if callable(self.curvature):
            return np.asarray(self.curvature(X), dtype=float).reshape(len(X))
        return np.full(len(X), float(self.curvature))

    def rhs_weight(self, X: Array) -> Array:
        """R(x) = mu^-(n+p+1) times f-hat^(1-p) (p<1) or f (p>=1)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        f = self.curvature_values(X)
        w = mu(X) ** (-(self.n + self.p + 1.0))
        if self.p < 1:
            return w * f ** (1.0 - self.p)
        return w * f

    def rhs_model(self, floor: float | None = None):
        if self.p < 1:
            m = _solver.PLessOne(self.rhs_weight, self.p)
        else:
            m = _solver.PowerP(self.rhs_weight, self.p)
        if floor is not None:
            m.floor = floor
        return m

    def phi_planar(self):
        b = self.boundary
        if isinstance(b, tuple) and len(b) == 2 and b[0] == "spherical":
            Phi = b[1]

            def phi(X, _P=Phi):
                X = np.atleast_2d(np.asarray(X, dtype=float))
                return mu(X) * np.asarray(_P(plane_to_sphere(X)), dtype=float).reshape(len(X))

            return phi
        return b


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    status: str                    # Admissible | NonexistentByLemma | ConditionFailed | Unknown
    which: str = ""
    diagnostics: list = field(default_factory=list)
    forced_zero_boundary: bool = False
    completeness_route: str = ""

    def add(self, criterion: str, value, threshold, *, divergent: bool = False,
            error: float = float("nan")) -> None:
        self.diagnostics.append({
            "criterion": criterion,
            "value": None if value is None or not np.isfinite(value) else float(value),
            "threshold": threshold,
            "divergent": bool(divergent),
            "error_estimate": None if not np.isfinite(error) else float(error),
        })

    def to_dict(self) -> dict:
        return {"status": self.status, "which": self.which,
                "forced_zero_boundary": self.forced_zero_boundary,
                "completeness_route": self.completeness_route,
                "diagnostics": list(self.diagnostics)}


# ---------------------------------------------------------------------------
# quadrature over a star-shaped domain with dyadic boundary refinement


@dataclass
class DomainIntegral:
    value: float
    divergent: bool
    terms: Array
    error_estimate: float


_G16 = np.polynomial.legendre.leggauss(16)


def _ray_lengths(domain, center: Array, dirs: Array) -> Array:
    from .domains import Ball, Ellipse

    if isinstance(domain, Ball):
        # rays from the true center: constant exit length
        if np.allclose(center, domain.center):
            return np.full(len(dirs), domain.radius)
    if isinstance(domain, Ellipse) and np.allclose(center, 0.0):
        return 1.0 / np.sqrt(np.sum((dirs / domain.semiaxes) ** 2, axis=1))
    # bisection on the membership indicator
    lo = np.zeros(len(dirs))
    hi = np.full(len(dirs), domain.diameter())
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = domain.inside(center + mid[:, None] * dirs)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def _directions(n: int, count: int) -> tuple[Array, float]:
    if n == 1:
        return np.array([[1.0], [-1.0]]), 1.0
    if n == 2:
        th = (np.arange(count) + 0.5) * 2 * np.pi / count
        return np.column_stack([np.cos(th), np.sin(th)]), 2 * np.pi / count
    i = np.arange(count, dtype=float)
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    th = np.pi * (1 + 5**0.5) * i
    return np.column_stack([r * np.cos(th), r * np.sin(th), z]), 4 * np.pi / count


def domain_integral(domain, fn, n_dirs: int | None = None, levels: int = 40,
                    center: Array | None = None) -> DomainIntegral:
    """integral of fn over the domain, with dyadic radial panels toward the
    boundary so collar singularities are either resolved or flagged.

    The domain must be star-shaped about its center (convex domains are).
    Divergence follows the same operational rules as the 1-d dyadic
    integrator: non-decaying shell terms or partial sums past 1e6x the
    first shell.
    """
    n = domain.n
    if n_dirs is None:
        n_dirs = {1: 2, 2: 256, 3: 512}[n]
    if center is None:
        center = domain.boundary_points(128).mean(axis=0) if n > 1 else \
            domain.boundary_points(2).mean(axis=0)
    dirs, w_dir = _directions(n, n_dirs)
    rays = _ray_lengths(domain, center, dirs)

    gx, gw = _G16

    def shell(tau_lo: float, tau_hi: float) -> tuple[float, float]:
        mid = 0.5 * (tau_lo + tau_hi)
        half = 0.5 * (tau_hi - tau_lo)
        out = 0.0
        for xg, wg in zip(gx, gw):
            tau = mid + half * xg
            pts = center + (tau * rays)[:, None] * dirs
            fv = np.asarray(fn(pts), dtype=float).reshape(len(pts))
            out += wg * float(np.sum(fv * (tau * rays) ** (n - 1) * rays))
        return half * out * w_dir, 0.0

    core, _ = shell(0.0, 0.5)
    terms = np.empty(levels)
    for k in range(levels):
        lo = 1.0 - 2.0 ** (-k - 1)
        hi = 1.0 - 2.0 ** (-k - 2)
        terms[k], _ = shell(lo, hi)

    if not np.all(np.isfinite(terms)):
        bad = int(np.argmax(~np.isfinite(terms)))
        return DomainIntegral(np.nan, True, terms[: bad + 1], np.nan)
    partial = np.cumsum(np.abs(terms))
    blown = partial[-1] > SUM_BLOWUP_FACTOR * max(abs(terms[0]), 1e-300)
    ratio = _limit_ratio(terms)
    if ratio >= RATIO_DIVERGENT or blown:
        return DomainIntegral(np.nan, True, terms, np.nan)
    tail = abs(terms[-1]) * ratio / (1.0 - ratio) if ratio > 0 else 0.0
    value = core + float(np.sum(terms)) + np.sign(terms[-1]) * tail if terms[-1] else core + float(np.sum(terms))
    return DomainIntegral(float(value), False, terms, tail * max(ratio, 0.0))


def _pullback(spec: ProblemSpec, data_fn) -> DomainIntegral:
    """Spherical-image integral of planar data: density mu^-(n+1)."""
    n = spec.n

    def fn(X, _d=data_fn, _n=n):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(_d(X), dtype=float).reshape(len(X)) * mu(X) ** (-(_n + 1.0))

    return domain_integral(spec.domain, fn)


# ---------------------------------------------------------------------------
# criteria


def check_conditions_ab(spec: ProblemSpec) -> Verdict:
    """Collar envelope conditions.

    (a) int_0^{r0} (int_s^{r0} g~)^(1/n_eff) ds < infinity,
    (b) int_0^{r0} h~ = infinity,
    with the exponent 1-p applied to the envelopes only in the sublinear
    case, and n_eff = n - m for cylindrical domains. Also estimates the
    sampled collar constant C with C^-1 h <= data <= C g when a domain and
    data are available.
    """
    r0 = spec.r0 if spec.r0 is not None else 0.45
    g_env, h_env, spread = spec.g, spec.h, None
    if g_env is None and h_env is None:
        g_env, h_env, spread = _inferred_envelopes(spec, r0)
    if g_env is None or h_env is None:
        raise MissingBounds("conditions (a)/(b) need both envelopes g and h")
    expo = 1.0 - spec.p if spec.case == "PLessOne" else 1.0
    g_t = (lambda t, _g=g_env, _e=expo: np.asarray(_g(t), dtype=float) ** _e)
    h_t = (lambda t, _h=h_env, _e=expo: np.asarray(_h(t), dtype=float) ** _e)

    inner = InnerIntegral(g_t, r0)
    outer = integrate_to_zero(lambda s: inner(s) ** (1.0 / spec.n_eff), r0)
    hb = integrate_to_zero(h_t, r0)

    v = Verdict(status="Admissible")
    if spread is not None:
        v.add("inferred-envelopes", spread,
              "constant collar bounds sampled from the data")
    v.add("(a)", outer.value, "< inf", divergent=outer.divergent,
          error=outer.error_estimate)
    v.add("(b)", hb.value, "= inf", divergent=hb.divergent,
          error=hb.error_estimate)
    if spec.domain is not None and getattr(spec.domain, "bounded", False):
        v.add("C", _collar_constant(spec, r0, g_env, h_env), "< inf")

    if outer.divergent:
        v.status = "ConditionFailed"
        v.which = "(a)"
    elif not hb.divergent:
        v.status = "ConditionFailed"
        v.which = "(b)"
    return v


def _collar_constant(spec: ProblemSpec, r0: float, g, h) -> float:
    """max sampled ratio pinning the data between its envelopes."""
    bp = spec.domain.boundary_points(64)
    inward = np.stack([spec.domain.boundary_frame(x).normal for x in bp])
    depths = r0 * 2.0 ** (-np.arange(1.0, 13.0))
    C = 1.0
    for d in depths:
        pts = bp + d * inward
        f = spec.curvature_values(pts)
        gv = float(np.min(np.asarray(g(np.array([d])), dtype=float)))
        hv = float(np.max(np.asarray(h(np.array([d])), dtype=float)))
        with np.errstate(divide="ignore"):
            C = max(C, float(np.max(f / gv)), float(np.max(hv / f)))
    return C


_INFER_SPREAD_CAP = 100.0


def _inferred_envelopes(spec: ProblemSpec, r0: float):
    """Constant envelopes sampled on the collar when none were declared.

    Valid only for data pinned between positive constants near the
    boundary, so the sampled spread must stay moderate; data that varies
    more than that across the collar needs declared envelopes.
    """
    if spec.curvature is None or spec.domain is None \
            or not getattr(spec.domain, "bounded", False):
        return None, None, None
    bp = spec.domain.boundary_points(64)
    inward = np.stack([spec.domain.boundary_frame(x).normal for x in bp])
    depths = r0 * 2.0 ** (-np.arange(1.0, 13.0))
    pts = np.concatenate([bp + d * inward for d in depths])
    f = spec.curvature_values(pts)
    lo, hi = float(f.min()), float(f.max())
    if lo <= 0.0 or hi / lo > _INFER_SPREAD_CAP:
        return None, None, None
    one = lambda t: np.ones_like(np.asarray(t, dtype=float))
    return (lambda t, _c=hi: _c * one(t)), \
        (lambda t, _c=lo: _c * one(t)), hi / lo


def check_nonexistence(spec: ProblemSpec) -> Verdict:
    """Refusal rules that make a complete convex solution impossible.

    finite-total-curvature: sublinear data with a positive support function
    sought and integrable total curvature mass; the spherical image cannot
    close up. signed-data-mass: superlinear data that is nonpositive with
    finite (p-1)-mass; the solution would have to cross its own extremes.
    """
    v = Verdict(status="Admissible")
    if spec.domain is None or not getattr(spec.domain, "bounded", False):
        return v

    if spec.case == "PLessOne" and spec.sign_hint == "Positive":
        mass = _pullback(spec, spec.curvature_values)
        v.add("finite-total-curvature", mass.value, "< inf triggers refusal",
              divergent=mass.divergent, error=mass.error_estimate)
        if not mass.divergent:
            v.status = "NonexistentByLemma"
            v.which = "finite-total-curvature"
            return v

    if spec.p > 1:
        sample = spec.curvature_values(_sample_points(spec.domain))
        if float(sample.max()) <= 0.0:
            pm = _pullback(spec, lambda X: np.abs(spec.curvature_values(X))
                           ** (spec.p - 1.0))
            v.add("signed-data-mass", pm.value, "< inf triggers refusal",
                  divergent=pm.divergent, error=pm.error_estimate)
            if not pm.divergent:
                v.status = "NonexistentByLemma"
                v.which = "signed-data-mass"
                return v
    return v


def _sample_points(domain, count: int = 512) -> Array:
    rng = np.random.default_rng(0)
    box = domain.bounding_box()
    lo, hi = box[:, 0], box[:, 1]
    pts = []
    while len(pts) < count:
        cand = lo + (hi - lo) * rng.uniform(size=(4 * count, domain.n))
        cand = cand[domain.inside(cand)]
        pts.extend(cand[: count - len(pts)])
    return np.asarray(pts)


def check_asymptotic(spec: ProblemSpec) -> Verdict:
    """Mass integral of the sublinear data: finite forces zero boundary
    data and a vanishing support function at the spherical-image boundary
    (registered as a post-solve check)."""
    if spec.case != "PLessOne":
        return Verdict(status="Admissible")
    mass = _pullback(spec, lambda X: spec.curvature_values(X) ** (1.0 - spec.p))
    v = Verdict(status="Admissible")
    v.add("data-mass", mass.value, "finite forces zero boundary data",
          divergent=mass.divergent, error=mass.error_estimate)
    v.forced_zero_boundary = not mass.divergent
    return v


def check_growth_typeII(spec: ProblemSpec) -> Verdict:
    """Fit the data's polynomial growth along dyadic radii.

    Accepts a clean power law f ~ (1+|x|^2)^q with fitted slope in (0,1);
    flat data is refused (a bounded f cannot force the growing asymptote),
    and so is any exponent outside the convex growth window.
    """
    from .barriers import _direction_cloud

    dirs = _direction_cloud(spec.n, 64)
    radii = 2.0 ** np.arange(0.0, 9.0)
    logs = []
    for r in radii:
        fv = spec.curvature_values(r * dirs)
        if np.any(fv <= 0):
            break
        logs.append(np.log(fv).mean())
    v = Verdict(status="Admissible")
    if len(logs) < 4:
        v.status = "ConditionFailed"
        v.which = "growth"
        v.add("q-fit", None, "data not positive along the radius ladder")
        return v
    x = np.log(1.0 + radii[: len(logs)] ** 2)
    y = np.asarray(logs)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    spread = float(np.max(np.abs(y - A @ [slope, intercept])))
    v.add("q-fit", slope, "in (0,1), spread < 0.1", error=spread)

    if abs(slope) <= 0.02:
        v.status = "ConditionFailed"
        v.which = "growth"
        v.add("flat-data", slope, "f cannot be bounded")
    elif not (0.0 < slope < 1.0):
        v.status = "ConditionFailed"
        v.which = "growth"
    elif spread >= 0.1:
        v.status = "ConditionFailed"
        v.which = "growth"
    else:
        v.completeness_route = "entire-growth"
        if spec.q is not None and abs(spec.q - slope) > 0.05:
            v.status = "ConditionFailed"
            v.which = "growth"
            v.add("q-mismatch", slope, f"declared q = {spec.q}")
    return v


def classify(spec: ProblemSpec) -> Verdict:
    """Aggregate verdict: nonexistence rules, then the case's conditions.

    Records the completeness route for sublinear problems: the collar-slope
    route when (b) holds, the gradient-image-volume route for p <= 0, the
    enclosing-sphere-bound regime (verdict Bounded) for 0 < p < 1 with
    bounded data.
    """
    non = check_nonexistence(spec)
    if non.status != "Admissible":
        return non
    diags = list(non.diagnostics)

    if spec.case == "TypeII":
        v = check_growth_typeII(spec)
        v.diagnostics = diags + v.diagnostics
        return v

    # (a)/(b) pin positive data between positive envelopes, so settle the
    # sign question first
    if spec.domain is not None and getattr(spec.domain, "bounded", False) \
            and spec.curvature is not None:
        sample = spec.curvature_values(_sample_points(spec.domain))
        if float(sample.min()) <= 0:
            return Verdict(status="ConditionFailed", which="positivity",
                           diagnostics=diags)

    ab = check_conditions_ab(spec)
    diags += ab.diagnostics

    if ab.status == "ConditionFailed" and ab.which == "(a)":
        ab.diagnostics = diags
        return ab

    b_holds = ab.status == "Admissible"
    v = Verdict(status="Admissible", diagnostics=diags)

    if spec.case == "PLessOne":
        asym = check_asymptotic(spec)
        v.diagnostics += asym.diagnostics
        v.forced_zero_boundary = asym.forced_zero_boundary
        if b_holds:
            v.completeness_route = "collar-slope"
        elif spec.p <= 0:
            v.completeness_route = "gradient-image-volume"
        else:
            v.completeness_route = "enclosing-sphere-bound"
        return v

    # superlinear Dirichlet cases refuse on a failed (b)
    if not b_holds:
        ab.diagnostics = diags
        return ab
    v.completeness_route = "collar-slope"
    return v


def refuse_if_inadmissible(spec: ProblemSpec) -> Verdict:
    """classify and raise the matching exception on refusal."""
    v = classify(spec)
    if v.status == "NonexistentByLemma":
        err = NonexistentByLemma(v.which)
        err.verdict = v
        raise err
    if v.status == "ConditionFailed":
        err = ConditionFailed(v.which)
        err.verdict = v
        raise err
    return v
