"""Triangulations of a convex polygon whose vertices are never moved or split.

Two generators share one contract (boundary nodes first, in order, bit-for-bit):

* ``ring_mesh`` stacks scaled copies of the boundary polygon and halves the node
  count inward.  On a disk it has the rotational symmetry of the angle grid, which
  keeps the recovered boundary gradient uniform to roundoff.
* ``delaunay_mesh`` is a force-based smoother (Persson-Strang) on top of
  ``scipy.spatial.Delaunay`` for bodies too anisotropic for rings.

``generate_mesh`` tries rings first and falls back when quality is not met.
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import Delaunay

from .errors import MeshFailure

log = logging.getLogger(__name__)

MIN_ANGLE_DEG = 20.0
# boundary edges are never split; edges next to a long boundary edge may exceed it by this factor
EDGE_SLACK = 1.35
# radial/tangential step ratios tried in turn by the ring generator
RING_ASPECTS = (0.866, 0.95, 0.8, 1.05, 0.72)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loop: np.ndarray
    kind: str = "ring"

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_loop.size

    @property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_loop] = False
        return mask

    @property
    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    @property
    def min_angle(self) -> float:
        return float(np.degrees(triangle_angles(self.vertices, self.triangles).min()))

    @property
    def max_edge(self) -> float:
        return float(edge_lengths(self.vertices, self.triangles).max())

    def scaled(self, c: float) -> "Mesh":
        return Mesh(c * self.vertices, self.triangles, self.boundary_loop, self.kind)


def signed_areas(pts: np.ndarray, tri: np.ndarray) -> np.ndarray:
    a, b, c = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def edge_lengths(pts: np.ndarray, tri: np.ndarray) -> np.ndarray:
    a, b, c = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    return np.column_stack(
        (np.linalg.norm(c - b, axis=1), np.linalg.norm(a - c, axis=1), np.linalg.norm(b - a, axis=1))
    )


def triangle_angles(pts: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Interior angles (radians), column k is the angle at vertex ``tri[:, k]``."""
    out = np.empty(tri.shape, dtype=float)
    for k in range(3):
        p0 = pts[tri[:, k]]
        e1 = pts[tri[:, (k + 1) % 3]] - p0
        e2 = pts[tri[:, (k + 2) % 3]] - p0
        cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        dot = np.einsum("ij,ij->i", e1, e2)
        out[:, k] = np.arctan2(np.abs(cross), dot)
    return out


def _orient(pts: np.ndarray, tri: np.ndarray) -> np.ndarray:
    tri = tri.copy()
    flip = signed_areas(pts, tri) < 0.0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def check_mesh(mesh: Mesh, target_size: float | None = None) -> None:
    areas = mesh.areas
    if areas.min() <= 0.0:
        raise MeshFailure("degenerate or inverted triangle")
    if mesh.min_angle < MIN_ANGLE_DEG:
        raise MeshFailure(f"minimum angle {mesh.min_angle:.2f} deg below {MIN_ANGLE_DEG}")
    if target_size is not None:
        X = mesh.vertices[mesh.boundary_loop]
        limit = max(target_size, EDGE_SLACK * boundary_spacing(X).max()) * (1.0 + 1e-9)
        if mesh.max_edge > limit:
            raise MeshFailure(f"edge {mesh.max_edge:.4g} exceeds size limit {limit:.4g}")


def boundary_spacing(X: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.roll(X, -1, axis=0) - X, axis=1)


def ring_mesh(X: np.ndarray, target_size: float, min_fan: int = 6, max_fan: int = 12,
              aspect: float = 0.866) -> Mesh:
    """Rings ``s * X[::stride]`` from the boundary (s = 1) down to a central fan.

    ``aspect`` is the radial step relative to the mean edge of the current ring.
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    perimeter = boundary_spacing(X).sum()
    r_mean = np.hypot(X[:, 0], X[:, 1]).mean()

    def ring_edge(stride: int) -> float:
        return float(boundary_spacing(X[::stride]).max())

    rho_max = np.hypot(X[:, 0], X[:, 1]).max()
    rings = [(1.0, N)]
    s, M = 1.0, N
    while M > max_fan:
        t = s * perimeter / M
        radial = aspect * t
        t_max = s * ring_edge(N // M)
        if t_max < 0.94 * target_size:
            # keep the quad diagonal inside the size limit, but not flatter than ~22 deg
            room = np.sqrt(target_size**2 - t_max**2) * r_mean / rho_max
            radial = max(min(radial, room), 0.4 * t_max)
        s_next = s - radial / r_mean
        if s_next <= 0.0:
            raise MeshFailure("ring mesh collapsed before reaching the centre")
        t_next = s_next * perimeter / M
        if M % 2 == 0 and M // 2 >= min_fan:
            # longest edge the next layer would have after halving (quad diagonal)
            diag = np.hypot(s_next * ring_edge(2 * (N // M)), aspect * 2.0 * t_next * rho_max / r_mean)
            if diag <= target_size or t_next < 0.6 * radial:
                M //= 2
        s = s_next
        rings.append((s, M))
    s_last, M_last = rings[-1]

    pts = [X]
    offsets = [0]
    count = N
    for s_k, M_k in rings[1:]:
        stride = N // M_k
        pts.append(s_k * X[::stride])
        offsets.append(count)
        count += M_k
    centre = count
    pts.append(np.zeros((1, 2)))
    vertices = np.vstack(pts)

    tris = []
    for k in range(len(rings) - 1):
        (_, Mo), (_, Mi) = rings[k], rings[k + 1]
        oo, oi = offsets[k], offsets[k + 1]
        jo = np.arange(Mo)
        if Mo == Mi:
            j = jo
            jn = (j + 1) % Mi
            tris.append(np.column_stack((oi + j, oo + j, oo + jn)))
            tris.append(np.column_stack((oi + j, oo + jn, oi + jn)))
        elif Mo == 2 * Mi:
            j = np.arange(Mi)
            jn = (j + 1) % Mi
            o0, o1, o2 = oo + 2 * j, oo + 2 * j + 1, oo + (2 * j + 2) % Mo
            tris.append(np.column_stack((oi + j, o0, o1)))
            tris.append(np.column_stack((oi + j, o1, oi + jn)))
            tris.append(np.column_stack((oi + jn, o1, o2)))
        else:
            raise MeshFailure(f"unsupported ring transition {Mo} -> {Mi}")
    oi = offsets[-1]
    j = np.arange(M_last)
    tris.append(np.column_stack((np.full(M_last, centre), oi + j, oi + (j + 1) % M_last)))
    triangles = _orient(vertices, np.vstack(tris).astype(np.int64))
    return Mesh(vertices, triangles, np.arange(N), kind="ring")


def _polygon_distance(X: np.ndarray):
    """Signed distance to the convex polygon X (negative inside)."""
    E = np.roll(X, -1, axis=0) - X
    normals = np.column_stack((E[:, 1], -E[:, 0]))
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    offsets = np.einsum("ij,ij->i", normals, X)

    def fd(p):
        return (p @ normals.T - offsets).max(axis=1)

    return fd


def _size_function(X: np.ndarray, target_size: float, grading: float):
    """Mesh size field: local boundary spacing near the boundary, graded toward the target.

    Near boundary edges longer than the target the size decays from the edge
    length instead of jumping, so the first interior layer matches the boundary.
    """
    spacing = boundary_spacing(X)
    hb = 0.5 * (spacing + np.roll(spacing, 1))
    lo, hi = X.min(axis=0), X.max(axis=0)
    n = 80
    gx = np.linspace(lo[0], hi[0], n)
    gy = np.linspace(lo[1], hi[1], n)
    G = np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1).reshape(-1, 2)
    d = np.linalg.norm(G[:, None, :] - X[None, :, :], axis=2)
    growing = np.minimum((hb[None, :] + grading * d).min(axis=1), target_size)
    decaying = (hb[None, :] - 2.0 * grading * d).max(axis=1)
    vals = np.maximum(growing, decaying)
    return RegularGridInterpolator((gx, gy), vals.reshape(n, n), bounds_error=False, fill_value=None)


def delaunay_mesh(
    X: np.ndarray,
    target_size: float,
    grading: float = 0.25,
    max_iter: int = 200,
    move_tol: float = 1e-3,
) -> Mesh:
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    fd = _polygon_distance(X)
    # the smoother stretches bars by up to ~1.2; aim below the requested size
    hfun = _size_function(X, target_size / 1.25, grading)
    lo, hi = X.min(axis=0), X.max(axis=0)
    h0 = float(hfun(X).min())

    xs = np.arange(lo[0], hi[0] + h0, h0)
    ys = np.arange(lo[1], hi[1] + h0, h0 * np.sqrt(3) / 2)
    gx, gy = np.meshgrid(xs, ys)
    gx[1::2] += h0 / 2
    p = np.column_stack((gx.ravel(), gy.ravel()))
    hp = hfun(p)
    inside = fd(p) < -0.5 * hp
    p, hp = p[inside], hp[inside]
    rng = np.random.default_rng(12345)
    p = p[rng.random(p.shape[0]) < (h0 / hp) ** 2]

    dt, fscale = 0.2, 1.2
    bars = None
    p_tri = None
    for _ in range(max_iter):
        allp = np.vstack((X, p))
        if bars is None or np.max(np.linalg.norm(p - p_tri, axis=1) / h0) > 0.1:
            tri = Delaunay(allp).simplices
            bars = np.sort(np.vstack((tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]])), axis=1)
            nv = allp.shape[0]
            keys = np.unique(bars[:, 0].astype(np.int64) * nv + bars[:, 1])
            bars = np.column_stack((keys // nv, keys % nv))
            hbar = hfun(0.5 * (allp[bars[:, 0]] + allp[bars[:, 1]]))
            p_tri = p.copy()
        vec = allp[bars[:, 0]] - allp[bars[:, 1]]
        L = np.linalg.norm(vec, axis=1)
        L0 = hbar * fscale * np.sqrt((L**2).sum() / (hbar**2).sum())
        F = np.maximum(L0 - L, 0.0)
        Fvec = (F / L)[:, None] * vec
        Ftot = np.zeros_like(allp)
        np.add.at(Ftot, bars[:, 0], Fvec)
        np.add.at(Ftot, bars[:, 1], -Fvec)
        move = dt * Ftot[N:]
        p = p + move
        # interior nodes keep clear of the fixed boundary
        keep = fd(p) < -0.35 * hfun(p)
        converged = np.max(np.linalg.norm(move, axis=1)) / h0 < move_tol
        if not keep.all():
            p = p[keep]
            bars = None
        elif converged:
            break

    vertices = np.vstack((X, p))
    triangles = _orient(vertices, Delaunay(vertices).simplices.astype(np.int64))
    areas = signed_areas(vertices, triangles)
    triangles = triangles[areas > 1e-14 * areas.max()]
    return Mesh(vertices, triangles, np.arange(N), kind="delaunay")


_CACHE: "OrderedDict[tuple, Mesh]" = OrderedDict()
_CACHE_SIZE = 16


def generate_mesh(body, target_size: float, kind: str = "auto") -> Mesh:
    """Triangulate ``body`` (a ConvexBody or an (N, 2) boundary polygon).

    Delaunay meshes are memoised on the exact boundary coordinates; they are the
    expensive ones and referee/acceptance runs re-mesh the same body repeatedly.
    """
    if target_size <= 0.0:
        raise ValueError("target_size must be positive")
    X = body.X if hasattr(body, "X") else np.asarray(body, dtype=float)
    key = (np.ascontiguousarray(X).tobytes(), float(target_size), kind)
    if key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]
    mesh = _generate(X, target_size, kind)
    if mesh.kind == "delaunay":
        _CACHE[key] = mesh
        if len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    return mesh


def _generate(X: np.ndarray, target_size: float, kind: str) -> Mesh:
    errors = []
    if kind in ("auto", "ring"):
        for aspect in RING_ASPECTS:
            try:
                mesh = ring_mesh(X, target_size, aspect=aspect)
                check_mesh(mesh, target_size)
                return mesh
            except MeshFailure as exc:
                errors.append(f"ring({aspect}): {exc}")
        if kind == "ring":
            raise MeshFailure("; ".join(errors))
        log.debug("ring meshes rejected (%s); falling back to Delaunay", errors)
    for shrink in (1.0, 0.9, 0.8):
        mesh = delaunay_mesh(X, shrink * target_size)
        try:
            check_mesh(mesh, target_size)
            return mesh
        except MeshFailure as exc:
            errors.append(f"delaunay({shrink}): {exc}")
    raise MeshFailure("; ".join(errors))
