"""Planar convex domains and the spherical chart over the lower hemisphere.

The solvers work on the tangent-plane chart: a point x in R^n corresponds to
the unit vector xi = (x, -1)/mu(x) in the open lower hemisphere, and a convex
body's support function restricted to the hemisphere pulls back to a function
on a planar convex domain Omega. This module owns Omega (signed distance,
boundary frames, collar geometry) and the chart algebra (mu, the metric of
the sphere in this chart, and the two chart maps).

Sign convention: signed_distance is positive inside, zero on the boundary,
negative outside, so for a ball of radius R it is exactly R - |x - c|.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .errors import AmbiguousFootPoint

Array = npt.NDArray[np.float64]


# ---------------------------------------------------------------------------
# spherical chart


def mu(x: Array) -> Array:
    """Conformal factor sqrt(1 + |x|^2); x has shape (..., n)."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + np.sum(x * x, axis=-1))


def plane_to_sphere(x: Array) -> Array:
    """Chart map x -> xi = (x, -1)/mu(x) into the open lower hemisphere."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = mu(x)
    xi = np.concatenate([x / m[..., None], -1.0 / m[..., None]], axis=-1)
    return xi


def sphere_to_plane(xi: Array) -> Array:
    """Inverse chart map; requires xi strictly in the lower hemisphere."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    last = xi[..., -1]
    if np.any(last >= -1e-14):
        raise ValueError("point not in the open lower hemisphere")
    return -xi[..., :-1] / last[..., None]


def spherical_metric(x: Array) -> tuple[Array, Array]:
    """Metric of the round sphere in the tangent-plane chart.

    Returns (sigma, det_sigma) at each x: sigma_ij = (1+|x|^2)^{-1}
    (delta_ij - x_i x_j / (1+|x|^2)), det sigma = (1+|x|^2)^{-(n+1)}.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[-1]
    m2 = 1.0 + np.sum(x * x, axis=-1)
    eye = np.eye(n)
    sigma = (eye - x[..., :, None] * x[..., None, :] / m2[..., None, None]) / m2[..., None, None]
    det = m2 ** (-(n + 1))
    return sigma, det


# ---------------------------------------------------------------------------
# boundary frame


@dataclass
class BoundaryFrame:
    """Foot point data for a point in the collar of a domain.

    foot: nearest boundary point; d: distance to the boundary;
    normal: inward unit normal at foot; curvatures: the n-1 principal
    curvatures of the boundary at foot (positive for convex domains).
    """

    foot: Array
    d: float
    normal: Array
    curvatures: Array


# ---------------------------------------------------------------------------
# domains


@dataclass
class PlanarDomain:
    """Base class; concrete kinds are Ball, Ellipse, SmoothConvex, Strip."""

    n: int = 0
    kind: str = ""
    bounded: bool = True
    r0: float = 0.0

    def signed_distance(self, x: Array) -> Array:
        raise NotImplementedError

    def contains(self, x: Array) -> Array:
        return self.signed_distance(x) > 0.0

    def inside(self, x: Array) -> Array:
        """Cheap membership test; overridden where signed_distance is slow."""
        return self.signed_distance(x) > 0.0

    def bounding_box(self) -> Array:
        """(n, 2) array of [lo, hi] per coordinate."""
        raise NotImplementedError

    def boundary_frame(self, x: Array) -> BoundaryFrame:
        raise NotImplementedError

    def boundary_points(self, count: int) -> Array:
        """Roughly uniform sample of the boundary, (count, n)."""
        raise NotImplementedError

    def min_curvature_radius(self) -> float:
        raise NotImplementedError

    def inradius(self) -> float:
        raise NotImplementedError

    def diameter(self) -> float:
        box = self.bounding_box()
        return float(np.linalg.norm(box[:, 1] - box[:, 0]))

    def _default_r0(self) -> float:
        return 0.45 * min(self.min_curvature_radius(), 0.95 * self.inradius())

    def validate_r0(self) -> None:
        if not (0.0 < self.r0):
            raise ValueError("r0 must be positive")
        cap = min(self.min_curvature_radius(), self.inradius()) * (1.0 + 1e-12)
        if self.r0 > cap:
            raise AmbiguousFootPoint(
                f"r0={self.r0:g} exceeds the unique-foot-point reach {cap:g}")


class Ball(PlanarDomain):
    def __init__(self, center, radius: float, n: int | None = None, r0: float | None = None):
        center = np.asarray(center, dtype=float)
        super().__init__(n=n if n is not None else len(center), kind="ball")
        self.center = center
        self.radius = float(radius)
        self.r0 = r0 if r0 is not None else self._default_r0()
        self.validate_r0()

    def signed_distance(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return self.radius - np.linalg.norm(x - self.center, axis=-1)

    def bounding_box(self) -> Array:
        lo = self.center - self.radius
        hi = self.center + self.radius
        return np.stack([lo, hi], axis=-1)

    def boundary_frame(self, x: Array) -> BoundaryFrame:
        x = np.asarray(x, dtype=float)
        v = x - self.center
        r = float(np.linalg.norm(v))
        if r < 1e-14:
            raise AmbiguousFootPoint("center of the ball has no unique foot point")
        out = v / r
        foot = self.center + self.radius * out
        curv = np.full(self.n - 1, 1.0 / self.radius)
        return BoundaryFrame(foot=foot, d=self.radius - r, normal=-out, curvatures=curv)

    def boundary_points(self, count: int) -> Array:
        return _sphere_points(self.n, count) * self.radius + self.center

    def min_curvature_radius(self) -> float:
        return self.radius

    def inradius(self) -> float:
        return self.radius


class Ellipse(PlanarDomain):
    """Axis-aligned ellipse (or ellipsoid) centered at the origin."""

    def __init__(self, semiaxes, r0: float | None = None):
        a = np.asarray(semiaxes, dtype=float)
        super().__init__(n=len(a), kind="ellipse")
        self.semiaxes = a
        self.r0 = r0 if r0 is not None else self._default_r0()
        self.validate_r0()

    def signed_distance(self, x: Array) -> Array:
        x2d = np.atleast_2d(np.asarray(x, dtype=float))
        d = _ellipse_distance(x2d, self.semiaxes)
        return d if np.asarray(x).ndim > 1 else float(d[0])

    def bounding_box(self) -> Array:
        return np.stack([-self.semiaxes, self.semiaxes], axis=-1)

    def boundary_frame(self, x: Array) -> BoundaryFrame:
        x = np.asarray(x, dtype=float)
        foot, d, ambiguous = _ellipse_foot(x, self.semiaxes)
        if ambiguous:
            raise AmbiguousFootPoint(f"point {x} has two nearest boundary points")
        grad = 2.0 * foot / self.semiaxes**2
        nrm = grad / np.linalg.norm(grad)
        curv = _level_curvatures(self._level, foot, 1e-4 * self.diameter())
        return BoundaryFrame(foot=foot, d=d, normal=-nrm, curvatures=curv)

    def _level(self, y: Array) -> Array:
        y = np.asarray(y, dtype=float)
        return np.sum((y / self.semiaxes) ** 2, axis=-1) - 1.0

    def boundary_points(self, count: int) -> Array:
        return _sphere_points(self.n, count) * self.semiaxes

    def min_curvature_radius(self) -> float:
        a = self.semiaxes
        return float(np.min(a) ** 2 / np.max(a))

    def inradius(self) -> float:
        return float(np.min(self.semiaxes))


class SmoothConvex(PlanarDomain):
    """Domain given by a smooth convex level function, negative inside.

    level: callable on (..., n) arrays; box: (n, 2) bounding box that must
    contain the body. Foot points are found by alternating projection onto
    the level set with a normal-displacement update, tolerance 1e-10,
    at most 100 iterations.
    """

    FOOT_TOL = 1e-10
    FOOT_MAX_ITER = 100

    def __init__(self, level, box, r0: float | None = None, boundary_samples: int = 512):
        box = np.asarray(box, dtype=float)
        super().__init__(n=box.shape[0], kind="smooth")
        self.level = level
        self.box = box
        self._bpts = None
        self._bsamples = boundary_samples
        self.r0 = r0 if r0 is not None else self._default_r0()
        self.validate_r0()
        self._check_collar_uniqueness()

    def signed_distance(self, x: Array) -> Array:
        x2d = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x2d.shape[0])
        inside = self.level(x2d) < 0.0
        for i, xi in enumerate(x2d):
            foot, d = self._foot(xi)
            out[i] = d if inside[i] else -d
        return out if np.asarray(x).ndim > 1 else float(out[0])

    def inside(self, x: Array) -> Array:
        x2d = np.atleast_2d(np.asarray(x, dtype=float))
        res = self.level(x2d) < 0.0
        return res if np.asarray(x).ndim > 1 else bool(res[0])

    def bounding_box(self) -> Array:
        return self.box

    def boundary_frame(self, x: Array) -> BoundaryFrame:
        x = np.asarray(x, dtype=float)
        foot, d = self._foot(x)
        g = _num_grad(self.level, foot, 1e-6 * self.diameter())
        nrm = g / np.linalg.norm(g)
        curv = _level_curvatures(self.level, foot, 1e-4 * self.diameter())
        return BoundaryFrame(foot=foot, d=d, normal=-nrm, curvatures=curv)

    def _project_to_level(self, y: Array) -> Array:
        for _ in range(60):
            f = float(self.level(y[None])[0])
            g = _num_grad(self.level, y, 1e-7 * self.diameter())
            step = f * g / max(np.dot(g, g), 1e-300)
            y = y - step
            if abs(f) < 1e-13:
                break
        return y

    def _foot(self, x: Array, y0: Array | None = None) -> tuple[Array, float]:
        y = self._project_to_level(np.array(x, dtype=float) if y0 is None else np.array(y0))
        for _ in range(self.FOOT_MAX_ITER):
            g = _num_grad(self.level, y, 1e-7 * self.diameter())
            nu = g / np.linalg.norm(g)
            y_new = self._project_to_level(x + np.dot(y - x, nu) * nu)
            if np.linalg.norm(y_new - y) < self.FOOT_TOL * max(1.0, self.diameter()):
                y = y_new
                break
            y = y_new
        return y, float(np.linalg.norm(y - x))

    def boundary_points(self, count: int) -> Array:
        pts = _sphere_points(self.n, count)
        center = np.mean(self.box, axis=1)
        scale = 0.5 * np.max(self.box[:, 1] - self.box[:, 0])
        out = np.empty((count, self.n))
        for i, u in enumerate(pts):
            out[i] = self._project_to_level(center + scale * u)
        return out

    def _boundary_cache(self) -> Array:
        if self._bpts is None:
            self._bpts = self.boundary_points(self._bsamples)
        return self._bpts

    def min_curvature_radius(self) -> float:
        pts = self._boundary_cache()
        h = 1e-4 * self.diameter()
        kmax = 0.0
        for y in pts[:: max(1, len(pts) // 64)]:
            curv = _level_curvatures(self.level, y, h)
            kmax = max(kmax, float(np.max(curv)))
        return 1.0 / max(kmax, 1e-300)

    def inradius(self) -> float:
        pts = self._boundary_cache()
        center = np.mean(self.box, axis=1)
        # crude inner bound: distance from the box center to the boundary
        return float(np.min(np.linalg.norm(pts - center, axis=1)))

    def _check_collar_uniqueness(self) -> None:
        rng = np.random.default_rng(0)
        pts = self._boundary_cache()
        sel = pts[rng.choice(len(pts), size=min(16, len(pts)), replace=False)]
        for y in sel:
            g = _num_grad(self.level, y, 1e-7 * self.diameter())
            nu = g / np.linalg.norm(g)
            x = y - 0.9 * self.r0 * nu  # collar point on the inward normal
            feet = []
            for _ in range(6):
                start = y + 0.3 * self.diameter() * rng.standard_normal(self.n)
                foot, d = self._foot(x, y0=start)
                feet.append((foot, d))
            dmin = min(d for _, d in feet)
            for foot, d in feet:
                if d < dmin * (1 + 1e-6) and np.linalg.norm(foot - feet[0][0]) > 1e-4 * self.diameter():
                    if abs(d - feet[0][1]) < 1e-6 * self.diameter():
                        raise AmbiguousFootPoint(
                            f"collar point {x} reaches two boundary points")


class Strip(PlanarDomain):
    """Unbounded product domain: a bounded convex section times R^m_free."""

    def __init__(self, section: PlanarDomain, m_free: int):
        super().__init__(n=section.n + m_free, kind="strip", bounded=False)
        self.section = section
        self.m_free = m_free
        self.r0 = section.r0

    def signed_distance(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return self.section.signed_distance(x[..., : self.section.n])

    def inside(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return self.section.inside(x[..., : self.section.n])

    def bounding_box(self) -> Array:
        raise ValueError("strip domains are unbounded; supply a truncation length")

    def truncated_box(self, length: float) -> Array:
        sec = self.section.bounding_box()
        free = np.tile([[-length, length]], (self.m_free, 1))
        return np.concatenate([sec, free], axis=0)

    def boundary_frame(self, x: Array) -> BoundaryFrame:
        x = np.asarray(x, dtype=float)
        fr = self.section.boundary_frame(x[: self.section.n])
        foot = np.concatenate([fr.foot, x[self.section.n:]])
        normal = np.concatenate([fr.normal, np.zeros(self.m_free)])
        curv = np.concatenate([fr.curvatures, np.zeros(self.m_free)])
        return BoundaryFrame(foot=foot, d=fr.d, normal=normal, curvatures=curv)

    def min_curvature_radius(self) -> float:
        return self.section.min_curvature_radius()

    def inradius(self) -> float:
        return self.section.inradius()


# ---------------------------------------------------------------------------
# helpers


def _sphere_points(n: int, count: int) -> Array:
    """Deterministic unit sphere sample: uniform angles (n=2), Fibonacci (n=3)."""
    if n == 1:
        return np.array([[-1.0], [1.0]])
    if n == 2:
        th = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    if n == 3:
        k = np.arange(count) + 0.5
        phi = np.arccos(1.0 - 2.0 * k / count)
        golden = np.pi * (1.0 + np.sqrt(5.0))
        th = golden * k
        return np.stack([np.sin(phi) * np.cos(th), np.sin(phi) * np.sin(th), np.cos(phi)], axis=-1)
    raise ValueError("only n in {1, 2, 3} supported")


def _num_grad(f, y: Array, h: float) -> Array:
    y = np.asarray(y, dtype=float)
    g = np.empty_like(y)
    for i in range(len(y)):
        e = np.zeros_like(y)
        e[i] = h
        g[i] = (float(f((y + e)[None])[0]) - float(f((y - e)[None])[0])) / (2.0 * h)
    return g


def _num_hess(f, y: Array, h: float) -> Array:
    y = np.asarray(y, dtype=float)
    n = len(y)
    H = np.empty((n, n))
    f0 = float(f(y[None])[0])
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        H[i, i] = (float(f((y + ei)[None])[0]) - 2.0 * f0 + float(f((y - ei)[None])[0])) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            val = (float(f((y + ei + ej)[None])[0]) - float(f((y + ei - ej)[None])[0])
                   - float(f((y - ei + ej)[None])[0]) + float(f((y - ei - ej)[None])[0])) / (4.0 * h**2)
            H[i, j] = H[j, i] = val
    return H


def _level_curvatures(level, y: Array, h: float) -> Array:
    """Principal curvatures of {level = 0} at boundary point y.

    Shape operator of the level set: project the Hessian onto the tangent
    space and divide by |grad|; eigenvalues are the curvatures (n=1 returns
    an empty array).
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n == 1:
        return np.zeros(0)
    g = _num_grad(level, y, h)
    ng = np.linalg.norm(g)
    nu = g / ng
    H = _num_hess(level, y, h)
    P = np.eye(n) - np.outer(nu, nu)
    S = P @ H @ P / ng
    w = np.linalg.eigvalsh(S)
    return np.sort(w)[-(n - 1):]


def _ellipse_distance(x: Array, a: Array) -> Array:
    """Distance to the ellipse boundary, positive inside; vectorized."""
    x = np.asarray(x, dtype=float)
    feet, d, inside = _ellipse_foot_batch(x, a)
    return np.where(inside, d, -d)


def _ellipse_foot_batch(x: Array, a: Array) -> tuple[Array, Array, Array]:
    """Nearest ellipse boundary points for a batch of x; bisection on the
    Lagrange multiplier. Interior points use y_i = x_i a_i^2/(a_i^2 - t),
    t in (0, min a^2); exterior use y_i = x_i a_i^2/(a_i^2 + t), t > 0."""
    x = np.atleast_2d(x)
    a2 = a**2
    amin2 = float(np.min(a2))
    lvl = np.sum((x / a) ** 2, axis=-1)
    inside = lvl < 1.0
    t = np.zeros(len(x))
    feet = np.empty_like(x)

    # interior branch
    idx = np.where(inside)[0]
    if len(idx):
        xi = x[idx]
        lo = np.zeros(len(idx))
        hi = np.full(len(idx), amin2 * (1.0 - 1e-14))
        G_hi = np.sum(xi**2 * a2 / (a2 - hi[:, None]) ** 2, axis=-1)
        degenerate = G_hi < 1.0  # nearest point leaves the span: ambiguous band
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            G = np.sum(xi**2 * a2 / (a2 - mid[:, None]) ** 2, axis=-1)
            too_small = G < 1.0
            lo = np.where(too_small, mid, lo)
            hi = np.where(too_small, hi, mid)
        tt = 0.5 * (lo + hi)
        yy = xi * a2 / (a2 - tt[:, None])
        if np.any(degenerate):
            # foot picks up a component along the smallest axis
            jmin = int(np.argmin(a2))
            dd = np.where(degenerate)[0]
            ydeg = xi[dd] * a2 / (a2 - amin2)
            ydeg[:, jmin] = 0.0
            rem = 1.0 - np.sum((ydeg / a) ** 2, axis=-1)
            ydeg[:, jmin] = a[jmin] * np.sqrt(np.maximum(rem, 0.0))
            yy[dd] = ydeg
        feet[idx] = yy

    # exterior branch
    idx = np.where(~inside)[0]
    if len(idx):
        xi = x[idx]
        lo = np.zeros(len(idx))
        hi = np.full(len(idx), float(np.max(a2)) + np.max(np.abs(xi)) * np.max(a) + 1.0)
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            G = np.sum(xi**2 * a2 / (a2 + mid[:, None]) ** 2, axis=-1)
            too_small = G < 1.0
            hi = np.where(too_small, mid, hi)
            lo = np.where(too_small, lo, mid)
        tt = 0.5 * (lo + hi)
        feet[idx] = xi * a2 / (a2 + tt[:, None])

    d = np.linalg.norm(feet - x, axis=-1)
    return feet, d, inside


def _ellipse_foot(x: Array, a: Array) -> tuple[Array, float, bool]:
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    a2 = a**2
    amin2 = float(np.min(a2))
    inside = float(np.sum((x2[0] / a) ** 2)) < 1.0
    ambiguous = False
    if inside:
        hi = amin2 * (1.0 - 1e-14)
        G_hi = float(np.sum(x2[0] ** 2 * a2 / (a2 - hi) ** 2))
        jmin = int(np.argmin(a2))
        if G_hi < 1.0 and abs(x2[0][jmin]) < 1e-13:
            ambiguous = True
    feet, d, _ = _ellipse_foot_batch(x2, a)
    return feet[0], float(d[0]), ambiguous
