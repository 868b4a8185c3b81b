"""Support-function calculus on the lower unit hemisphere and its chart.

The graph chart identifies ξ = (x, -1)/μ(x), μ = sqrt(1+|x|²), so a
1-homogeneous support function H on directions pulls back to u(x) = μ H(ξ)
on the plane. Everything here moves data between those pictures: extension,
restriction, discrete Legendre conjugation, and the Hessian identity
relating D²u to the spherical Hessian of H.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .domains import mu, plane_to_sphere, sphere_to_plane, spherical_metric
from .errors import UnboundedDual
from .grids import Grid, GridFunction, grid_over_box, _outer_ring

Array = np.ndarray


@dataclass
class SupportField:
    """Support-function data on a cap of the lower hemisphere.

    eval takes direction vectors (not necessarily unit) and returns the
    1-homogeneous extension: eval(z) = |z| * H(z/|z|).
    """

    fn: Callable[[Array], Array]
    cap_polar: float = np.pi / 2  # max angle from the south pole covered

    def eval(self, z: Array) -> Array:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        norms = np.linalg.norm(z, axis=-1)
        unit = z / norms[..., None]
        return norms * np.asarray(self.fn(unit), dtype=float)


def extend_support(H, x: Array) -> Array:
    """u(x) = mu(x) H(xi(x)): homogeneous-degree-1 extension in the chart."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = plane_to_sphere(x)
    fn = H.eval if isinstance(H, SupportField) else H
    return mu(x) * np.asarray(fn(xi), dtype=float).reshape(x.shape[0])


def restrict_to_sphere(u, xi: Array, grid: Grid | None = None) -> Array:
    """H(xi) = u(x(xi)) / mu(x(xi)) for directions on the lower hemisphere.

    u may be a callable on plane points or a GridFunction (interpolated
    multilinearly; directions must land inside the masked region).
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    x = sphere_to_plane(xi)
    if isinstance(u, GridFunction):
        vals = _interpolate(u, x)
    else:
        vals = np.asarray(u(x), dtype=float)
    return vals / mu(x)


def _interpolate(gf: GridFunction, pts: Array) -> Array:
    interp = RegularGridInterpolator(gf.grid.axes(), gf.values, method="linear",
                                     bounds_error=False, fill_value=np.nan)
    out = interp(pts)
    if np.any(np.isnan(out)):
        raise ValueError("interpolation point outside the masked grid region")
    return out


@dataclass
class Conjugate:
    """Discrete Legendre transform with its argmax map."""

    dual: GridFunction
    gradient: Array  # argmax node per dual node, shape (*dual.shape, n)
    boundary_contact: Array  # bool per dual node: argmax on the mask's outer ring


def legendre(u: GridFunction, dual_box, h_dual: float | None = None,
             shape: tuple[int, ...] | None = None,
             allow_boundary_contact: bool = False,
             chunk: int = 4096) -> GridFunction:
    """Discrete conjugate u*(y) = max over masked nodes of (x.y - u(x)).

    Exact brute-force sup over the masked-in nodes, evaluated on a fresh
    lattice over dual_box. Raises UnboundedDual when the sup sits on the
    mask's outer ring for every y in some face of dual_box, which means
    the requested dual window sees gradients the grid cannot certify.
    """
    return conjugate(u, dual_box, h_dual, shape, allow_boundary_contact, chunk).dual


def conjugate(u: GridFunction, dual_box, h_dual: float | None = None,
              shape: tuple[int, ...] | None = None,
              allow_boundary_contact: bool = False,
              chunk: int = 4096) -> Conjugate:
    dual_box = np.asarray(dual_box, dtype=float)
    n = u.grid.n
    if shape is not None:
        axes = [np.linspace(dual_box[i, 0], dual_box[i, 1], shape[i]) for i in range(n)]
        h = float(axes[0][1] - axes[0][0]) if shape[0] > 1 else 1.0
        dual_grid = Grid(origin=dual_box[:, 0].copy(), h=h, shape=tuple(shape))
        ys = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    else:
        h = float(h_dual if h_dual is not None else u.grid.h)
        dual_grid = grid_over_box(dual_box, h, pad=0)
        ys = dual_grid.flat_nodes()

    sel = u.masked_in
    X = u.grid.nodes()[sel]
    vals = u.values[sel]
    ring = _outer_ring(sel)[sel]

    best = np.empty(ys.shape[0])
    arg = np.empty(ys.shape[0], dtype=np.int64)
    for lo in range(0, ys.shape[0], chunk):
        hi = min(lo + chunk, ys.shape[0])
        scores = ys[lo:hi] @ X.T - vals[None, :]
        arg[lo:hi] = np.argmax(scores, axis=1)
        best[lo:hi] = scores[np.arange(hi - lo), arg[lo:hi]]

    contact = ring[arg]
    if not allow_boundary_contact:
        _check_faces(dual_grid, contact.reshape(dual_grid.shape))

    dual_mask = np.ones(dual_grid.shape, dtype=np.int8)
    dual = GridFunction(dual_grid, dual_mask, best.reshape(dual_grid.shape))
    gradient = X[arg].reshape(*dual_grid.shape, n)
    return Conjugate(dual, gradient, contact.reshape(dual_grid.shape))


def _check_faces(dual_grid: Grid, contact: Array) -> None:
    for axis in range(dual_grid.n):
        for side, idx in (("low", 0), ("high", dual_grid.shape[axis] - 1)):
            sl = [slice(None)] * dual_grid.n
            sl[axis] = idx
            face = contact[tuple(sl)]
            if face.size and np.all(face):
                raise UnboundedDual(
                    f"conjugate argmax sits on the mask boundary across the whole "
                    f"{side} face of axis {axis}; shrink the dual box or pass "
                    f"allow_boundary_contact=True")


@dataclass
class AsymptoticCone:
    """Blow-down cone of a graph: psi(y) = sup over the domain closure of x.y.

    Stored as generator points; psi is exact for their convex hull and
    1-homogeneous by construction.
    """

    points: Array

    def psi(self, y: Array) -> Array:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.max(y @ self.points.T, axis=1)


def asymptotic_cone(domain, samples: int = 4096) -> AsymptoticCone:
    """Cone the solution graph opens up to at infinity (zero boundary data).

    The conjugate grows like u*(t y) = t psi(y) + O(1) with psi the support
    function of the domain closure. Accepts a planar domain, a point cloud
    (rows generate the hull), or a GridFunction (its masked nodes generate).
    """
    if isinstance(domain, GridFunction):
        pts = domain.masked_nodes()
    elif hasattr(domain, "boundary_points"):
        pts = domain.boundary_points(samples)
    else:
        pts = np.atleast_2d(np.asarray(domain, dtype=float))
    return AsymptoticCone(points=pts)


def hessian_identity_residual(H, x: Array, h_fd: float = 1e-3) -> float:
    """Residual of D²u = mu (Hess_sphere H + H sigma) at a chart point.

    Both sides are built from independent finite differences: the left from
    the planar extension u = mu*H(xi), the right from chart derivatives of
    h(x) = H(xi(x)) assembled with the analytic metric and Christoffels of
    the graph chart. Small residual certifies the eval is a genuine support
    field near x.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    fn = H.eval if isinstance(H, SupportField) else H

    def u_at(pt):
        return extend_support(fn, pt[None, :])[0]

    def h_at(pt):
        return float(np.asarray(fn(plane_to_sphere(pt[None, :])), dtype=float).reshape(-1)[0])

    lhs = _fd_hessian(u_at, x, h_fd)

    grad_h = _fd_gradient(h_at, x, h_fd)
    hess_h = _fd_hessian(h_at, x, h_fd)
    sigma, _ = spherical_metric(x[None, :])
    sigma = sigma[0]
    m2 = 1.0 + float(x @ x)
    hval = h_at(x)
    # Christoffels of sigma in this chart: Gamma^k_ij = -(d_ik x_j + d_jk x_i)/(1+|x|^2)
    cov = hess_h.copy()
    for i in range(n):
        for j in range(n):
            cov[i, j] += (grad_h[i] * x[j] + grad_h[j] * x[i]) / m2
    rhs = np.sqrt(m2) * (cov + hval * sigma)
    return float(np.linalg.norm(lhs - rhs))


def _fd_gradient(f, x: Array, h: float) -> Array:
    n = x.size
    g = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _fd_hessian(f, x: Array, h: float) -> Array:
    n = x.size
    out = np.zeros((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        out[i, i] = (f(x + ei) + f(x - ei) - 2 * f0) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            out[i, j] = out[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * h**2)
    return out
