"""Monotone discretization of det D^2 u on masked lattices.

The operator takes, over a family of orthogonal lattice direction bases
(axes and diagonals by default), the minimum of the product of positive
parts of second differences along each basis. Hadamard's inequality makes
this exact on quadratics whose eigenbasis lies in the stencil, and the
min/product structure is nondecreasing in every neighbor value and
nonincreasing in the center value, which is what the convergence theory
for degenerate Monge-Ampere equations needs.

Arms that would cross the domain boundary are cut: the second difference
uses the boundary intersection point (found by bisection on the membership
test) with its Dirichlet value, at the fractional spacing t in (0, 1].
The nonuniform 3-point difference stays exact on quadratics for any t.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grids import Grid, GridFunction, grid_over_domain, mask_domain, stencil_bases

Array = np.ndarray

T_MIN = 1e-3  # cut-arm fraction clamp; keeps the difference coefficients bounded


@dataclass
class _ArmTable:
    """Per-direction neighbor data for one sign of the direction."""

    nb: np.ndarray      # unknown index of the neighbor, -1 where the arm is cut
    t: Array            # spacing fraction, 1 for regular arms
    cut_points: Array   # boundary intersection for cut arms (rows matching cut)
    cut_sel: np.ndarray  # bool: arm is cut
    phi: Array          # Dirichlet values on cut arms (0 elsewhere), set later


class DiscreteMAOperator:
    """det D^2 discretization bound to one domain/grid/mask triple."""

    def __init__(self, domain, h: float | None = None, grid: Grid | None = None,
                 mask: np.ndarray | None = None, wide: bool = False,
                 bisection_steps: int = 60):
        if grid is None:
            if h is None:
                raise ValueError("pass either h or a prebuilt grid")
            grid = grid_over_domain(domain, h, pad=2)
            mask = mask_domain(grid, domain)
        elif mask is None:
            mask = mask_domain(grid, domain)
        self.domain = domain
        self.grid = grid
        self.mask = mask
        self.bases = stencil_bases(grid.n, wide=wide)
        self.directions = sorted({e for base in self.bases for e in base})
        self._dir_pos = {e: k for k, e in enumerate(self.directions)}

        sel = mask > 0
        self.node_index = np.argwhere(sel)
        self.N = len(self.node_index)
        self.nodes = grid.origin + grid.h * self.node_index
        self.index_map = np.full(grid.shape, -1, dtype=np.int64)
        self.index_map[sel] = np.arange(self.N)

        self._arms: dict[tuple[int, ...], tuple[_ArmTable, _ArmTable]] = {}
        for e in self.directions:
            plus = self._build_arm(np.asarray(e, dtype=int), +1, bisection_steps)
            minus = self._build_arm(np.asarray(e, dtype=int), -1, bisection_steps)
            self._arms[e] = (plus, minus)
        self.is_interior = np.ones(self.N, dtype=bool)
        for plus, minus in self._arms.values():
            self.is_interior &= ~plus.cut_sel & ~minus.cut_sel

    # -- construction -----------------------------------------------------

    def _build_arm(self, e: np.ndarray, sign: int, steps: int) -> _ArmTable:
        idx = self.node_index + sign * e
        oob = np.any((idx < 0) | (idx >= np.array(self.grid.shape)), axis=1)
        idx_c = np.clip(idx, 0, np.array(self.grid.shape) - 1)
        nb = self.index_map[tuple(idx_c.T)]
        nb[oob] = -1
        cut = nb < 0

        t = np.ones(self.N)
        pts = np.zeros((int(cut.sum()), self.grid.n))
        if np.any(cut):
            x0 = self.nodes[cut]
            step = sign * self.grid.h * e.astype(float)
            lo = np.zeros(len(x0))
            hi = np.ones(len(x0))
            # node is inside, node + step is not: bisect the crossing
            for _ in range(steps):
                mid = 0.5 * (lo + hi)
                inside = self.domain.inside(x0 + mid[:, None] * step)
                lo = np.where(inside, mid, lo)
                hi = np.where(inside, hi, mid)
            tc = np.maximum(0.5 * (lo + hi), T_MIN)
            t[cut] = tc
            pts = x0 + tc[:, None] * step
        return _ArmTable(nb=nb, t=t, cut_points=pts, cut_sel=cut,
                         phi=np.zeros(self.N))

    def set_boundary_values(self, phi) -> None:
        """Install Dirichlet data: a callable on (..., n) points or a scalar."""
        for plus, minus in self._arms.values():
            for arm in (plus, minus):
                if not np.any(arm.cut_sel):
                    continue
                if callable(phi):
                    vals = np.asarray(phi(arm.cut_points), dtype=float).reshape(-1)
                else:
                    vals = np.full(len(arm.cut_points), float(phi))
                arm.phi = np.zeros(self.N)
                arm.phi[arm.cut_sel] = vals

    # -- evaluation --------------------------------------------------------

    def second_difference(self, u: Array, e: tuple[int, ...]) -> Array:
        plus, minus = self._arms[e]
        up = np.where(plus.nb >= 0, u[np.maximum(plus.nb, 0)], plus.phi)
        um = np.where(minus.nb >= 0, u[np.maximum(minus.nb, 0)], minus.phi)
        e2 = float(np.dot(e, e))
        scale = 2.0 / (self.grid.h**2 * e2 * (plus.t + minus.t))
        return scale * ((up - u) / plus.t + (um - u) / minus.t)

    def all_second_differences(self, u: Array) -> Array:
        """(D, N) array over self.directions."""
        return np.stack([self.second_difference(u, e) for e in self.directions])

    def ma_apply(self, u: Array) -> Array:
        """Min over bases of prod of positive parts plus the sum of negative
        parts; (N,) values.

        The negative-part term vanishes on discretely convex functions, so
        fixed points with positive data are unchanged; away from convexity
        it keeps the operator strictly decreasing in the center value, which
        is what lets the Newton iteration climb back instead of sitting on a
        flat clamp.
        """
        deltas = self.all_second_differences(u)
        best = None
        for base in self.bases:
            prod = np.ones(self.N)
            neg = np.zeros(self.N)
            for e in base:
                d = deltas[self._dir_pos[e]]
                prod = prod * np.maximum(d, 0.0)
                neg = neg + np.minimum(d, 0.0)
            cand = prod + neg
            best = cand if best is None else np.minimum(best, cand)
        return best

    def ma_apply_grid(self, gf: GridFunction) -> GridFunction:
        u = gf.values[self.mask > 0]
        vals = np.full(self.grid.shape, np.nan)
        vals[self.mask > 0] = self.ma_apply(u)
        return GridFunction(self.grid, self.mask, vals)

    def ma_with_jacobian(self, u: Array, jac_floor: float | None = None
                         ) -> tuple[Array, sp.csr_matrix]:
        """Operator values and the (semismooth) Jacobian at the active base.

        The derivative weights clamp each co-factor below by jac_floor so
        rows never vanish where some second difference is nonpositive;
        the clamp is inactive near nondegenerate solutions.
        """
        deltas = self.all_second_differences(u)
        pos = np.maximum(deltas, 0.0)

        prods = np.empty((len(self.bases), self.N))
        for b, base in enumerate(self.bases):
            prod = np.ones(self.N)
            neg = np.zeros(self.N)
            for e in base:
                d = deltas[self._dir_pos[e]]
                prod = prod * np.maximum(d, 0.0)
                neg = neg + np.minimum(d, 0.0)
            prods[b] = prod + neg
        active = np.argmin(prods, axis=0)
        vals = prods[active, np.arange(self.N)]

        if jac_floor is None:
            axis_scale = float(np.median(pos[: self.grid.n].max(axis=0))) if self.N else 1.0
            jac_floor = 1e-8 * (1.0 + axis_scale)
        clamped = np.maximum(pos, jac_floor)

        rows, cols, data = [], [], []
        idx_all = np.arange(self.N)
        for b, base in enumerate(self.bases):
            sel = active == b
            if not np.any(sel):
                continue
            ids = idx_all[sel]
            for e in base:
                # prod branch where the arm is convex, unit slope through
                # the negative-part penalty where it is not
                w = np.ones(len(ids))
                for e2 in base:
                    if e2 != e:
                        w = w * clamped[self._dir_pos[e2]][sel]
                w = np.where(deltas[self._dir_pos[e]][sel] > 0.0, w, 1.0)
                plus, minus = self._arms[e]
                ee = float(np.dot(e, e))
                tp = plus.t[sel]
                tm = minus.t[sel]
                base_c = 2.0 / (self.grid.h**2 * ee * (tp + tm))
                cp = base_c / tp
                cm = base_c / tm
                # center coefficient
                rows.append(ids)
                cols.append(ids)
                data.append(-w * (cp + cm))
                # neighbor coefficients where the arm is an unknown
                for arm, c in ((plus, cp), (minus, cm)):
                    nb = arm.nb[sel]
                    has = nb >= 0
                    if np.any(has):
                        rows.append(ids[has])
                        cols.append(nb[has])
                        data.append((w * c)[has])
        J = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.N, self.N)).tocsr()
        return vals, J

    # -- diagnostics ---------------------------------------------------------

    def convexity_defect(self, u: Array) -> float:
        """Most negative second difference over all stencil directions."""
        deltas = self.all_second_differences(u)
        return float(min(0.0, deltas.min()))

    def to_grid_function(self, u: Array, sign_hint: str = "Unsigned") -> GridFunction:
        vals = np.full(self.grid.shape, np.nan)
        vals[self.mask > 0] = u
        return GridFunction(self.grid, self.mask, vals, sign_hint)

    def boundary_distance(self) -> Array:
        """Per-node distance to the boundary along the shortest cut arm (inf
        for nodes with no cut arm)."""
        d = np.full(self.N, np.inf)
        for e, (plus, minus) in self._arms.items():
            le = self.grid.h * float(np.sqrt(np.dot(e, e)))
            for arm in (plus, minus):
                if np.any(arm.cut_sel):
                    d[arm.cut_sel] = np.minimum(d[arm.cut_sel], arm.t[arm.cut_sel] * le)
        return d

    def sample_phi(self, phi) -> Array:
        """Evaluate boundary data on all masked nodes (for initial guesses)."""
        if callable(phi):
            return np.asarray(phi(self.nodes), dtype=float).reshape(-1)
        return np.full(self.N, float(phi))
