"""Damped Newton solver for det D^2 u = RHS(x, u) on masked grids.

The right-hand side models are monotone nondecreasing in u, which is the
structure that makes the comparison principle valid and keeps the Newton
Jacobian an M-matrix perturbation. The singular p<1 right-hand side
R(x) (-1/u)^(1-p) with zero boundary data is reached by continuation:
boundary values are held at phi - eps while eps is decreased geometrically
(factor 1/4) from half the companion depth scale to 1e-10, each level
warm-started from the previous one, and the last two levels are
Richardson-extrapolated. Starting at the depth scale matters: the first
level must still be an easy Newton target from the constant-determinant
companion, which fails once the boundary offset is far inside the
singular range of the right-hand side.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvexityLoss, NewtonStalled
from .operator import DiscreteMAOperator

Array = np.ndarray

DIRECT_LIMIT = 30_000         # unknowns; above this the AMG path takes over
DIRECT_LIMIT_PLANAR = 200_000  # 2d bandwidths keep sparse LU cheap far longer
EPS_FINAL = 1e-10
EPS_FACTOR = 0.25
LINESEARCH_FLOOR = 2.0**-30


# ---------------------------------------------------------------------------
# right-hand side models


class Constant:
    """det D^2 u = c."""

    def __init__(self, c: float):
        self.c = float(c)

    def values(self, nodes: Array, u: Array) -> Array:
        return np.full(len(u), self.c)

    def derivative(self, nodes: Array, u: Array) -> Array:
        return np.zeros(len(u))

    def scaled(self, factor: float) -> "Constant":
        return Constant(self.c * factor)


class PLessOne:
    """det D^2 u = R(x) (-1/u)^(1-p), u < 0, p < 1.

    floor regularizes the singularity: u is clamped to at most -floor
    before the power is taken. Nondecreasing in u on u < 0.
    """

    def __init__(self, R, p: float, floor: float = 1e-10):
        if p >= 1:
            raise ValueError("PLessOne requires p < 1")
        self.R = R
        self.p = float(p)
        self.floor = float(floor)

    def _r(self, nodes: Array) -> Array:
        return (np.asarray(self.R(nodes), dtype=float).reshape(len(nodes))
                if callable(self.R) else np.full(len(nodes), float(self.R)))

    def values(self, nodes: Array, u: Array) -> Array:
        uc = np.minimum(u, -self.floor)
        return self._r(nodes) * (-uc) ** (self.p - 1.0)

    def derivative(self, nodes: Array, u: Array) -> Array:
        uc = np.minimum(u, -self.floor)
        d = (1.0 - self.p) * self._r(nodes) * (-uc) ** (self.p - 2.0)
        return np.where(u < -self.floor, d, 0.0)

    def scaled(self, factor: float) -> "PLessOne":
        R = self.R
        if callable(R):
            return PLessOne(lambda x, _R=R: factor * np.asarray(_R(x)), self.p, self.floor)
        return PLessOne(factor * R, self.p, self.floor)

    def with_floor(self, floor: float) -> "PLessOne":
        return PLessOne(self.R, self.p, floor)


class PowerP:
    """det D^2 u = R(x) u^(p-1), u > 0, p >= 1. Nondecreasing in u."""

    def __init__(self, R, p: float, floor: float = 1e-14):
        if p < 1:
            raise ValueError("PowerP requires p >= 1")
        self.R = R
        self.p = float(p)
        self.floor = float(floor)

    def _r(self, nodes: Array) -> Array:
        return (np.asarray(self.R(nodes), dtype=float).reshape(len(nodes))
                if callable(self.R) else np.full(len(nodes), float(self.R)))

    def values(self, nodes: Array, u: Array) -> Array:
        uc = np.maximum(u, self.floor)
        return self._r(nodes) * uc ** (self.p - 1.0)

    def derivative(self, nodes: Array, u: Array) -> Array:
        uc = np.maximum(u, self.floor)
        d = (self.p - 1.0) * self._r(nodes) * uc ** (self.p - 2.0)
        return np.where(u > self.floor, d, 0.0)

    def scaled(self, factor: float) -> "PowerP":
        R = self.R
        if callable(R):
            return PowerP(lambda x, _R=R: factor * np.asarray(_R(x)), self.p, self.floor)
        return PowerP(factor * R, self.p, self.floor)


# ---------------------------------------------------------------------------
# linear solves


class LinearSolver:
    """Direct factorization below DIRECT_LIMIT unknowns, algebraic multigrid
    preconditioned BiCGStab above, with hierarchy reuse across Newton steps
    and a direct fallback. Deterministic either way."""

    def __init__(self, rebuild_every: int = 4, direct_limit: int = DIRECT_LIMIT):
        self.rebuild_every = rebuild_every
        self.direct_limit = direct_limit
        self._ml = None
        self._age = 0

    def solve(self, J: sp.csr_matrix, b: Array) -> Array:
        N = J.shape[0]
        if N <= self.direct_limit:
            return spla.splu(J.tocsc()).solve(b)
        A = (-J).tocsr()  # positive diagonal, M-matrix-like
        rhs = -b
        try:
            import pyamg

            if self._ml is None or self._age >= self.rebuild_every:
                self._ml = pyamg.ruge_stuben_solver(A)
                self._age = 0
            M = self._ml.aspreconditioner(cycle="V")
            x, info = spla.bicgstab(A, rhs, M=M, rtol=1e-10, atol=0.0, maxiter=300)
            self._age += 1
            if info != 0:
                self._ml = pyamg.ruge_stuben_solver(A)
                self._age = 0
                M = self._ml.aspreconditioner(cycle="V")
                x, info = spla.bicgstab(A, rhs, M=M, rtol=1e-10, atol=0.0, maxiter=600)
            if info == 0:
                return x
        except ImportError:
            pass
        return spla.splu(J.tocsc()).solve(b)


# ---------------------------------------------------------------------------
# reports


@dataclass
class SolveReport:
    outer_iterations: int = 0
    newton_iterations: int = 0
    final_residual: float = float("inf")
    damping_history: list = field(default_factory=list)
    continuation_path: list = field(default_factory=list)
    convexity_violations: int = 0
    worst_node: int = -1
    history: list = field(default_factory=list)  # (level, iter, residual, alpha, eps)

    def to_dict(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "newton_iterations": self.newton_iterations,
            "final_residual": self.final_residual,
            "continuation_path": list(self.continuation_path),
            "convexity_violations": self.convexity_violations,
        }

    def history_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("level,iteration,residual,damping,eps\n")
            for row in self.history:
                fh.write("%d,%d,%.17g,%.17g,%.17g\n" % row)


# ---------------------------------------------------------------------------
# Newton iteration


def scaled_residual(F: Array, rhs_vals: Array) -> float:
    return float(np.max(np.abs(F) / (1.0 + np.abs(rhs_vals))))


def _newton(op: DiscreteMAOperator, rhs, u: Array, tol: float, max_iters: int,
            lin: LinearSolver, report: SolveReport, level: int = 0,
            eps: float = 0.0) -> Array:
    nodes = op.nodes
    for it in range(max_iters):
        mavals, J = op.ma_with_jacobian(u)
        rv = rhs.values(nodes, u)
        F = mavals - rv
        res = scaled_residual(F, rv)
        report.history.append((level, it, res, 1.0, eps))
        if res <= tol:
            report.final_residual = res
            return u
        Jfull = J - sp.diags(rhs.derivative(nodes, u))
        delta = lin.solve(Jfull.tocsr(), -F)

        alpha = 1.0
        while True:
            trial = u + alpha * delta
            rv_t = rhs.values(nodes, trial)
            F_t = op.ma_apply(trial) - rv_t
            if scaled_residual(F_t, rv_t) <= (1.0 - 1e-4 * alpha) * res:
                break
            alpha *= 0.5
            if alpha < LINESEARCH_FLOOR:
                report.worst_node = int(np.argmax(np.abs(F) / (1.0 + np.abs(rv))))
                raise NewtonStalled(
                    f"line search fell below 2^-30 at residual {res:.3e} "
                    f"(node {report.worst_node})")
        u = trial
        report.newton_iterations += 1
        report.damping_history.append(alpha)
    mavals = op.ma_apply(u)
    rv = rhs.values(nodes, u)
    res = scaled_residual(mavals - rv, rv)
    if res > tol:
        report.worst_node = int(np.argmax(np.abs(mavals - rv) / (1.0 + np.abs(rv))))
        raise NewtonStalled(f"no convergence in {max_iters} Newton iterations "
                            f"(residual {res:.3e})")
    report.final_residual = res
    return u


def _paraboloid_init(op: DiscreteMAOperator, phi_nodes: Array, c: float) -> Array:
    center = op.nodes.mean(axis=0)
    r2 = np.sum((op.nodes - center) ** 2, axis=1)
    rad2 = float(np.max(r2))
    return phi_nodes - max(c, 1e-12) ** (1.0 / op.grid.n) * 0.5 * (rad2 - r2)


def solve_dirichlet(op: DiscreteMAOperator, rhs, phi, init: Array | None = None,
                    tol_solve: float = 1e-8, max_newton: int = 80,
                    extrapolate: bool = True,
                    check_convexity: bool = True) -> tuple[Array, SolveReport]:
    """Solve det D^2 u = rhs(x, u) with Dirichlet data phi on the domain of op.

    phi is a callable on points or a scalar. PLessOne models run the eps
    continuation; the others solve directly. Returns the unknown vector
    (masked-node order) and the report.
    """
    report = SolveReport()
    lin = LinearSolver(direct_limit=DIRECT_LIMIT_PLANAR if op.grid.n <= 2
                       else DIRECT_LIMIT)
    phi_nodes = op.sample_phi(phi)

    if isinstance(rhs, PLessOne):
        u = _solve_p_less_one(op, rhs, phi, phi_nodes, init, tol_solve, max_newton,
                              lin, report, extrapolate)
    else:
        op.set_boundary_values(phi)
        if init is None:
            c0 = float(np.max(rhs.values(op.nodes, np.maximum(np.abs(phi_nodes), 1e-6))))
            init = _paraboloid_init(op, phi_nodes, c0)
        u = _newton(op, rhs, init.copy(), tol_solve, max_newton, lin, report)
        report.outer_iterations = 1

    if check_convexity:
        tol_cvx = 1e-8 * float(np.max(np.abs(u)) + 1e-300)
        defect = op.convexity_defect(u)
        if defect < -tol_cvx:
            report.convexity_violations = 1
            raise ConvexityLoss(
                f"solution second difference {defect:.3e} below -{tol_cvx:.3e}")
    return u, report


def _solve_p_less_one(op, rhs: PLessOne, phi, phi_nodes, init, tol, max_newton,
                      lin, report, extrapolate) -> Array:
    # depth scale from the constant-determinant companion problem
    cscale = float(np.max(rhs._r(op.nodes)))
    op.set_boundary_values(phi)
    u_const, _ = _run_constant(op, cscale, phi, phi_nodes, tol, max_newton, lin, report)
    scale = max(float(np.max(phi_nodes) - np.min(u_const)), 1e-6)

    eps = 0.5 * scale
    levels = [eps]
    while eps > EPS_FINAL:
        eps = max(eps * EPS_FACTOR, EPS_FINAL)
        levels.append(eps)

    # the shift keeps each warm start consistent with the offset boundary
    # data, including the first level (u_const carries the unshifted trace)
    prev = init.copy() if init is not None else u_const.copy()
    prev_eps = 0.0
    for k, eps in enumerate(levels):
        offset = _shifted_phi(phi, eps)
        op.set_boundary_values(offset)
        level_rhs = rhs.with_floor(max(0.25 * eps, EPS_FINAL * 0.25))
        u = prev + (prev_eps - eps)
        # intermediate levels only warm-start the next one; the last two
        # must hit the full tolerance for the extrapolation to be valid
        level_tol = tol if k >= len(levels) - 2 else max(tol, 1e-3 * eps)
        u = _newton(op, level_rhs, u, level_tol, max_newton, lin, report,
                    level=k, eps=eps)
        report.continuation_path.append(eps)
        prev, prev_eps = u.copy(), eps
        if k == len(levels) - 2:
            u_second_last = u.copy()
    report.outer_iterations = len(levels)

    if extrapolate and len(levels) >= 2:
        # boundary offsets shrink geometrically; the last step may be clamped
        # to EPS_FINAL, so use the realized ratio rather than EPS_FACTOR
        rho = levels[-1] / levels[-2]
        u = u + (u - u_second_last) * (rho / (1.0 - rho))
    return u


def _shifted_phi(phi, eps: float):
    if callable(phi):
        return lambda X, _p=phi, _e=eps: np.asarray(_p(X), dtype=float) - _e
    return float(phi) - eps


def _run_constant(op, c, phi, phi_nodes, tol, max_newton, lin, report):
    rhs = Constant(c)
    init = _paraboloid_init(op, phi_nodes, c)
    u = _newton(op, rhs, init, tol, max_newton, lin, report, level=-1)
    return u, report


# ---------------------------------------------------------------------------
# consistency checks


def comparison_check(u_small_rhs: Array, u_large_rhs: Array,
                     tol_cmp: float) -> tuple[bool, int, float]:
    """Larger RHS must give the smaller solution: u_small >= u_large - tol.

    Returns (ok, worst node index, worst signed violation).
    """
    gap = u_small_rhs - u_large_rhs
    worst = int(np.argmin(gap))
    return bool(gap[worst] >= -tol_cmp), worst, float(min(gap[worst], 0.0))


def scaling_check(op: DiscreteMAOperator, u: Array, rhs, phi, lam: float) -> float:
    """Residual of lambda*u against R -> lambda^(n+1-p) R with scaled data.

    det D^2 is n-homogeneous and the u-powers supply the rest, so the
    scaled field solves the scaled problem exactly; the returned residual
    is pure roundoff plus solver error times lambda^n.
    """
    p = getattr(rhs, "p", 1.0)
    factor = lam ** (op.grid.n + 1.0 - p)
    scaled_rhs = rhs.scaled(factor)
    scaled_phi = (lambda X, _p=phi, _l=lam: _l * np.asarray(_p(X), dtype=float)) \
        if callable(phi) else lam * float(phi)
    op.set_boundary_values(scaled_phi)
    try:
        vals = op.ma_apply(lam * u)
        rv = scaled_rhs.values(op.nodes, lam * u)
        return scaled_residual(vals - rv, rv)
    finally:
        op.set_boundary_values(phi)
