"""Uniform Cartesian lattices and masked grid functions.

A GridFunction stores one scalar field over the lattice covering a domain's
bounding box. The mask tags each node exterior (0), interior (1), or
boundary (2, meaning inside the domain but within h/2 of its boundary).
Both interior and boundary nodes carry values; exterior nodes hold NaN.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

Array = npt.NDArray[np.float64]

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2


@dataclass
class Grid:
    """Axis-aligned lattice: nodes at origin + index*h, given shape."""

    origin: Array
    h: float
    shape: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.shape)

    def axes(self) -> list[Array]:
        return [self.origin[i] + self.h * np.arange(self.shape[i]) for i in range(self.n)]

    def nodes(self) -> Array:
        """All node coordinates, shape (*shape, n)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def flat_nodes(self) -> Array:
        return self.nodes().reshape(-1, self.n)


def grid_over_box(box: Array, h: float, pad: int = 2) -> Grid:
    """Lattice covering box with pad extra nodes on each side."""
    box = np.asarray(box, dtype=float)
    lo = box[:, 0] - pad * h
    hi = box[:, 1] + pad * h
    shape = tuple(int(np.floor((hi[i] - lo[i]) / h)) + 1 for i in range(box.shape[0]))
    return Grid(origin=lo, h=float(h), shape=shape)


def grid_over_domain(domain, h: float, pad: int = 2) -> Grid:
    return grid_over_box(domain.bounding_box(), h, pad)


@dataclass
class GridFunction:
    grid: Grid
    mask: npt.NDArray[np.int8]
    values: Array
    sign_hint: str = "Unsigned"

    def __post_init__(self):
        if self.mask.shape != self.grid.shape or self.values.shape != self.grid.shape:
            raise ValueError("mask/values shape must match the grid shape")

    @property
    def masked_in(self) -> npt.NDArray[np.bool_]:
        return self.mask > 0

    def masked_values(self) -> Array:
        return self.values[self.masked_in]

    def masked_nodes(self) -> Array:
        return self.grid.nodes()[self.masked_in]

    def osc(self) -> float:
        v = self.masked_values()
        return float(v.max() - v.min()) if v.size else 0.0

    def copy_with(self, values: Array) -> "GridFunction":
        return GridFunction(self.grid, self.mask, values, self.sign_hint)

    def second_difference(self, direction: tuple[int, ...]) -> tuple[Array, npt.NDArray[np.bool_]]:
        """Centered second difference along a lattice direction.

        Returns (delta, where) with delta defined where the node and both
        stencil neighbors are masked in; h^2|e|^2 normalization included.
        """
        e = np.asarray(direction, dtype=int)
        plus = _shift(self.values, -e)
        minus = _shift(self.values, e)
        ok = _shift(self.masked_in, -e) & _shift(self.masked_in, e) & self.masked_in
        denom = self.grid.h**2 * float(np.dot(e, e))
        delta = np.where(ok, (plus + minus - 2.0 * self.values) / denom, 0.0)
        return delta, ok

    def is_discretely_convex(self, directions=None, tol: float | None = None) -> bool:
        """Centered second differences >= -tol along each stencil direction.

        Checked at nodes whose full centered stencil is masked in. Default
        tol is 1e-8 * max|values|.
        """
        if directions is None:
            directions = default_directions(self.grid.n)
        if tol is None:
            vals = self.masked_values()
            tol = 1e-8 * (float(np.max(np.abs(vals))) if vals.size else 1.0)
        for e in directions:
            delta, ok = self.second_difference(e)
            if np.any(delta[ok] < -tol):
                return False
        return True

    def convexity_defect(self, directions=None) -> float:
        """Most negative centered second difference over the stencil (>= 0 is convex)."""
        if directions is None:
            directions = default_directions(self.grid.n)
        worst = 0.0
        for e in directions:
            delta, ok = self.second_difference(e)
            if np.any(ok):
                worst = min(worst, float(delta[ok].min()))
        return worst

    def to_csv(self, path) -> None:
        """Write masked nodes as x1,..,xn,value rows."""
        nodes = self.masked_nodes()
        vals = self.masked_values()
        data = np.column_stack([nodes, vals])
        header = ",".join([f"x{i+1}" for i in range(self.grid.n)] + ["value"])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def _shift(a: Array, e) -> Array:
    """Shift array by lattice offset e, filling rolled-in entries.

    Boolean arrays fill with False, floats with NaN, so masked logic stays
    correct at the array edge.
    """
    out = a
    fill = False if a.dtype == bool else np.nan
    for axis, k in enumerate(e):
        if k == 0:
            continue
        out = np.roll(out, k, axis=axis)
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(0, k) if k > 0 else slice(k, None)
        out = out.copy()
        out[tuple(sl)] = fill
    return out


def default_directions(n: int) -> list[tuple[int, ...]]:
    """Stencil directions: axes plus coordinate-plane diagonals."""
    if n == 1:
        return [(1,)]
    if n == 2:
        return [(1, 0), (0, 1), (1, 1), (1, -1)]
    if n == 3:
        return [
            (1, 0, 0), (0, 1, 0), (0, 0, 1),
            (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1),
        ]
    raise ValueError("only n in {1, 2, 3} supported")


def stencil_bases(n: int, wide: bool | int = False) -> list[tuple[tuple[int, ...], ...]]:
    """Orthogonal lattice bases used by the monotone determinant scheme.

    Default: coordinate axes plus the diagonal pairs in each coordinate
    plane. In 2d, wide=True (or an integer width W >= 2) adds every
    primitive direction with entries up to W paired with its perpendicular;
    the minimum over bases then resolves eigendirections to within an
    angular gap that shrinks like 1/W.
    """
    if n == 1:
        return [((1,),)]
    if n == 2:
        width = 2 if wide is True else max(1, int(wide))
        bases = []
        for a in range(1, width + 1):
            for b in range(0, width + 1):
                if math.gcd(a, b) != 1:
                    continue
                bases.append(((a, b), (-b, a)))
        return bases
    if n == 3:
        bases = [
            ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
            ((1, 1, 0), (1, -1, 0), (0, 0, 1)),
            ((1, 0, 1), (1, 0, -1), (0, 1, 0)),
            ((0, 1, 1), (0, 1, -1), (1, 0, 0)),
        ]
        return bases
    raise ValueError("only n in {1, 2, 3} supported")


def mask_domain(grid: Grid, domain, inside_margin: float = 0.0) -> npt.NDArray[np.int8]:
    """Tag grid nodes against a domain: 0 outside, 1 interior, 2 near-boundary.

    Near-boundary means inside with signed distance below h/2. The signed
    distance evaluation is vectorized for ball/ellipse/strip kinds; smooth
    level-set domains tag the outermost inside ring instead (their distance
    is only computed pointwise).
    """
    nodes = grid.flat_nodes()
    if domain.kind == "smooth":
        inside = (domain.level(nodes) < 0.0).reshape(grid.shape)
        mask = np.where(inside, INTERIOR, EXTERIOR).astype(np.int8)
        ring = _outer_ring(inside)
        mask[ring] = BOUNDARY
        return mask
    sd = np.asarray(domain.signed_distance(nodes), dtype=float).reshape(grid.shape)
    mask = np.full(grid.shape, EXTERIOR, dtype=np.int8)
    inside = sd > inside_margin
    mask[inside & (sd >= 0.5 * grid.h)] = INTERIOR
    mask[inside & (sd < 0.5 * grid.h)] = BOUNDARY
    return mask


def _outer_ring(inside: npt.NDArray[np.bool_]) -> npt.NDArray[np.bool_]:
    ring = np.zeros_like(inside)
    n = inside.ndim
    for axis in range(n):
        for k in (1, -1):
            e = [0] * n
            e[axis] = k
            ring |= inside & ~_shift(inside, tuple(e))
    return ring


def grid_function_from(domain, h: float, fn, sign_hint: str = "Unsigned",
                       pad: int = 2) -> GridFunction:
    """Sample a callable on the masked lattice over the domain."""
    grid = grid_over_domain(domain, h, pad)
    mask = mask_domain(grid, domain)
    values = np.full(grid.shape, np.nan)
    sel = mask > 0
    values[sel] = fn(grid.nodes()[sel])
    return GridFunction(grid, mask, values, sign_hint)
