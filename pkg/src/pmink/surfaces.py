"""Hypersurface meshes built from discrete conjugates, with curvatures.

The reconstructed hypersurface is the graph of the conjugate u* over the
dual grid: vertices (y, u*(y)), simplex faces, downward unit normals, and
per-vertex support value H, Gauss curvature K, and p-curvature K_p = K
H^(p-1). K comes from the gradient-map area ratio (the discrete
Monge-Ampere measure of u* per dual cell divided by cell area), corrected
by the graph factor (1+|Du*|^2)^(-(n+2)/2). Cell images share corners, so
the estimate is exactly conservative under summation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvexityLoss, NonconvexDual, ZeroSupport
from .grids import GridFunction

Array = np.ndarray


@dataclass
class Hypersurface:
    """Graph mesh over the dual grid with per-vertex curvature data.

    vertices: (V, n+1) rows (y, u*(y)); faces: (F, n+1) simplex indices,
    oriented so the simplex normal has negative last coordinate; normals:
    per-vertex downward unit normals; gradient: per-vertex Du*.
    """

    vertices: Array
    faces: np.ndarray
    normals: Array
    gradient: Array
    H: Array
    K: Array
    K_p: Array | None = None
    p: float | None = None
    grid_shape: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.vertices.shape[1] - 1

    def diam(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def convexity_defect(self, max_pairs: int = 40_000_000) -> float:
        """Largest drop of any vertex below any face plane (0 for convex).

        Faces come from the lower convex hull, so every vertex lies on or
        above every face plane by construction; a positive defect flags a
        meshing or orientation bug. Exhaustive when F*V is small,
        deterministic face subsample beyond.
        """
        y = self.vertices[:, :-1]
        z = self.vertices[:, -1]
        faces = self.faces
        if faces.shape[0] * len(z) > max_pairs:
            step = int(np.ceil(faces.shape[0] * len(z) / max_pairs))
            faces = faces[::step]
        worst = 0.0
        for fa in np.array_split(faces, max(1, len(faces) // 2048)):
            coef = _face_planes(y, z, fa)
            vals = y @ coef[:, :-1].T + coef[:, -1][None, :]
            worst = min(worst, float(np.min(z[:, None] - vals)))
        return -worst

    def check_convex(self, tol: float | None = None) -> None:
        if tol is None:
            tol = 1e-8 * self.diam()
        defect = self.convexity_defect()
        if defect > tol:
            raise ConvexityLoss(
                f"mesh vertex dips {defect:.3e} below a face plane "
                f"(tol {tol:.3e})")

    def to_ply(self, path) -> None:
        """ASCII PLY with per-vertex H, K, K_p; n = 1 pads to 3d."""
        if self.n > 2:
            raise ValueError("PLY export supports graphs over 1d or 2d duals; use CSV")
        V = self.vertices
        if self.n == 1:
            V = np.column_stack([V[:, 0], np.zeros(len(V)), V[:, 1]])
        kp = self.K_p if self.K_p is not None else np.zeros(len(V))
        lines = [
            "ply", "format ascii 1.0",
            f"element vertex {len(V)}",
            "property float x", "property float y", "property float z",
            "property float H", "property float K", "property float K_p",
            f"element face {len(self.faces)}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        for i in range(len(V)):
            lines.append("%.9g %.9g %.9g %.9g %.9g %.9g"
                         % (V[i, 0], V[i, 1], V[i, 2], self.H[i], self.K[i], kp[i]))
        for f in self.faces:
            lines.append(str(len(f)) + " " + " ".join(str(int(i)) for i in f))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_csv(self, path) -> None:
        kp = self.K_p if self.K_p is not None else np.zeros(len(self.vertices))
        data = np.column_stack([self.vertices, self.H, self.K, kp])
        header = ",".join([f"y{i+1}" for i in range(self.n)] + ["ustar", "H", "K", "K_p"])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def _face_planes(y: Array, z: Array, faces: np.ndarray) -> Array:
    """Affine coefficients (a, b) with plane z = a.y + b per face."""
    A = np.concatenate([y[faces], np.ones((*faces.shape, 1))], axis=-1)
    rhs = z[faces]
    return np.linalg.solve(A, rhs[..., None])[..., 0]


def graph_support(y: Array, ustar: Array, grad: Array) -> Array:
    """Support value of the tangent plane: (y.Du* - u*)/sqrt(1+|Du*|^2)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    grad = np.atleast_2d(np.asarray(grad, dtype=float))
    num = np.sum(y * grad, axis=-1) - np.asarray(ustar, dtype=float).reshape(-1)
    return num / np.sqrt(1.0 + np.sum(grad * grad, axis=-1))


def graph_p_curvature(K: Array, H: Array, p: float) -> Array:
    """K_p = K H^(p-1); requires H bounded away from zero unless p = 1."""
    K = np.asarray(K, dtype=float)
    H = np.asarray(H, dtype=float)
    if p == 1.0:
        return K.copy()
    if np.any(np.abs(H) < 1e-12):
        raise ZeroSupport("support value vanishes at a vertex; K_p undefined for p != 1")
    return K * np.sign(H) * np.abs(H) ** (p - 1.0)


def build_hypersurface(dual: GridFunction, p: float | None = None,
                       validate: bool = True,
                       convexity_tol: float | None = None) -> Hypersurface:
    """Mesh the graph of a conjugate stored on a full rectangular dual grid.

    Requires every dual node masked in, discretely convex. Per-vertex
    gradients are centered differences (one-sided at the grid edge); K is
    the per-cell gradient image area over cell area averaged onto vertices
    and corrected by the graph factor. Faces are the lower convex hull of
    the vertex cloud, so every face plane supports the whole mesh; sample
    points that a lattice triangulation would crease across (conjugates
    are often piecewise affine) sit harmlessly above nearby faces.
    """
    if not np.all(dual.masked_in):
        raise ValueError("dual grid function must cover its full rectangle")
    n = dual.grid.n
    if n not in (1, 2):
        raise ValueError("hypersurface meshes support 1d and 2d dual grids")
    if validate and not dual.is_discretely_convex():
        raise NonconvexDual(
            f"dual samples break midpoint convexity by {-dual.convexity_defect():.3e}")
    vals = dual.values
    h = dual.grid.h
    ys = dual.grid.nodes()
    grad = _grid_gradient(vals, h)

    if n == 1:
        verts = np.column_stack([ys[:, 0], vals])
        faces = np.stack([np.arange(len(vals) - 1), np.arange(1, len(vals))], axis=1)
        cellK = np.diff(grad[:, 0]) / h
        g2 = grad[:, 0] ** 2
        Kv = _cells_to_vertices_1d(cellK) / (1.0 + g2) ** 1.5
        gradv = grad
    else:
        verts = np.column_stack([ys.reshape(-1, 2), vals.reshape(-1)])
        faces = _lower_hull_faces(verts)
        cellMA = _cell_image_area(grad, h)
        Kcell = cellMA / h**2
        Kv_raw = _cells_to_vertices_2d(Kcell)
        g2 = np.sum(grad * grad, axis=-1).reshape(-1)
        Kv = Kv_raw.reshape(-1) / (1.0 + g2) ** ((n + 2) / 2.0)
        gradv = grad.reshape(-1, 2)

    denom = np.sqrt(1.0 + np.sum(gradv * gradv, axis=-1))
    normals = np.concatenate([gradv, -np.ones((len(gradv), 1))], axis=-1) / denom[:, None]
    Hv = graph_support(verts[:, :-1], verts[:, -1], gradv)
    Kp = graph_p_curvature(Kv, Hv, p) if p is not None else None

    surf = Hypersurface(
        vertices=verts, faces=faces, normals=normals, gradient=gradv,
        H=Hv, K=Kv, K_p=Kp, p=p, grid_shape=dual.grid.shape)
    if validate:
        try:
            surf.check_convex(convexity_tol)
        except ConvexityLoss as exc:
            raise NonconvexDual(str(exc)) from exc
    return surf


def _grid_gradient(vals: Array, h: float) -> Array:
    if vals.ndim == 1:
        return np.gradient(vals, h)[:, None]
    parts = np.gradient(vals, h)
    return np.stack(parts, axis=-1)


def _lower_hull_faces(verts: Array) -> np.ndarray:
    """Downward-facing facets of the convex hull of the graph cloud.

    Simplices are reordered clockwise in (y1, y2) so the geometric normal
    points downward. Vertices strictly above the lower hull appear in no
    face, which is what keeps every face plane supporting.
    """
    from scipy.spatial import ConvexHull

    hull = ConvexHull(verts, qhull_options="Qt")
    down = hull.equations[:, 2] < -1e-12
    faces = hull.simplices[down]
    v = verts[faces]
    cross_z = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
               - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0]))
    flip = cross_z > 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return faces


def _cell_image_area(grad: Array, h: float) -> Array:
    """Signed shoelace area of each cell's gradient image quadrilateral.

    Corners are shared between neighboring cells, so summing over cells
    telescopes to the area swept by the whole gradient image.
    """
    g00 = grad[:-1, :-1]
    g10 = grad[1:, :-1]
    g11 = grad[1:, 1:]
    g01 = grad[:-1, 1:]
    quad = [g00, g10, g11, g01]
    area = np.zeros(g00.shape[:2])
    for k in range(4):
        p = quad[k]
        q = quad[(k + 1) % 4]
        area += p[..., 0] * q[..., 1] - q[..., 0] * p[..., 1]
    return 0.5 * area


def _cells_to_vertices_2d(cellK: Array) -> Array:
    ni, nj = cellK.shape
    out = np.zeros((ni + 1, nj + 1))
    cnt = np.zeros((ni + 1, nj + 1))
    for di in (0, 1):
        for dj in (0, 1):
            out[di:ni + di, dj:nj + dj] += cellK
            cnt[di:ni + di, dj:nj + dj] += 1.0
    return out / cnt


def _cells_to_vertices_1d(cellK: Array) -> Array:
    m = len(cellK)
    out = np.zeros(m + 1)
    cnt = np.zeros(m + 1)
    out[:-1] += cellK
    out[1:] += cellK
    cnt[:-1] += 1
    cnt[1:] += 1
    return out / cnt
