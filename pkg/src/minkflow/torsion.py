"""P1 finite elements for the q-torsion problem  -div(|grad u|^{q-2} grad u) = 1,  u = 0 on the boundary.

The regularised energy (1/q) int (|grad u|^2 + eps^2)^{q/2} - int u is minimised
by damped Picard (Kacanov) iteration; each linearised system is solved by
``pcg``.  Boundary nodes of the mesh are the body's boundary points, so the
recovered boundary gradient lives directly on the angle grid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateGradient, NoConvergence, SingularSystem
from .geometry import N_DIM, ConvexBody
from .mesh import Mesh, generate_mesh, triangle_angles
from .pcg import pcg

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    eps_reg: float | None = None  # None: 1e-8 * diameter^{1/(q-1)}
    tol: float = 1e-10
    max_iter: int = 200
    cg_rtol: float = 1e-12
    gradient_method: str = "flux"


@dataclass(eq=False)
class TorsionSolution:
    mesh: Mesh
    q: float
    u: np.ndarray
    grad: np.ndarray
    boundary_grad: np.ndarray | None = None
    T_tilde: float | None = None
    T_tilde_boundary: float | None = None
    energy: float = np.nan
    iterations: int = 0
    energy_history: list[float] = field(default_factory=list)
    eps_reg: float = 0.0

    @property
    def consistency_gap(self) -> float:
        return abs(self.T_tilde - self.T_tilde_boundary) / self.T_tilde

    def scaled(self, c: float) -> "TorsionSolution":
        """Exact solution on the mesh dilated by ``c`` (the problem is homogeneous)."""
        qc = self.q / (self.q - 1.0)
        gs = c ** (1.0 / (self.q - 1.0))
        vol = c ** (N_DIM + qc)
        return TorsionSolution(
            self.mesh.scaled(c), self.q, c**qc * self.u, gs * self.grad,
            None if self.boundary_grad is None else gs * self.boundary_grad,
            None if self.T_tilde is None else vol * self.T_tilde,
            None if self.T_tilde_boundary is None else vol * self.T_tilde_boundary,
            vol * self.energy, self.iterations, [vol * e for e in self.energy_history], gs * self.eps_reg,
        )


class P1Operator:
    """Geometric data of a P1 discretisation that does not depend on u."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        pts, tri = mesh.vertices, mesh.triangles
        a, b, c = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
        area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        self.area = 0.5 * area2
        # gradient of the hat function of local vertex k: rot90(opposite edge) / (2 area)
        G = np.empty((tri.shape[0], 3, 2))
        for k, (p, r) in enumerate(((b, c), (c, a), (a, b))):
            e = r - p
            G[:, k, 0] = -e[:, 1] / area2
            G[:, k, 1] = e[:, 0] / area2
        self.G = G
        self.local = np.einsum("tkd,tld->tkl", G, G) * self.area[:, None, None]
        self.rows = np.repeat(tri, 3, axis=1).ravel()
        self.cols = np.tile(tri, (1, 3)).ravel()
        n = pts.shape[0]
        self.load = np.bincount(tri.ravel(), weights=np.repeat(self.area / 3.0, 3), minlength=n)
        self.interior = np.flatnonzero(mesh.interior)

    def gradients(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("tkd,tk->td", self.G, u[self.mesh.triangles])

    def stiffness(self, weight: np.ndarray) -> sp.csr_matrix:
        n = self.mesh.n_vertices
        data = (self.local * weight[:, None, None]).ravel()
        return sp.csr_matrix((data, (self.rows, self.cols)), shape=(n, n))

    def energy(self, u: np.ndarray, q: float, eps: float) -> float:
        g = self.gradients(u)
        s = np.einsum("td,td->t", g, g) + eps * eps
        return float(np.sum(self.area * s ** (q / 2.0)) / q - self.load @ u)

    def integral(self, u: np.ndarray) -> float:
        return float(self.load @ u)


def default_eps(mesh: Mesh, q: float) -> float:
    X = mesh.vertices[mesh.boundary_loop]
    diam = float(np.max(np.linalg.norm(X[:, None, :] - X[None, ::4, :], axis=2)))
    return 1e-8 * diam ** (1.0 / (q - 1.0))


def _weights(g: np.ndarray, q: float, eps: float) -> np.ndarray:
    s = np.einsum("td,td->t", g, g) + eps * eps
    w = s ** ((q - 2.0) / 2.0)
    if not np.all(np.isfinite(w)) or w.min() <= 0.0 or w.max() / w.min() > 1e250:
        raise SingularSystem("Picard weights under/overflow; eps_reg too small for this q")
    return w


def solve_qlaplace(
    mesh: Mesh,
    q: float,
    eps_reg: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
    cg_rtol: float = 1e-12,
    u0: np.ndarray | None = None,
    op: P1Operator | None = None,
) -> TorsionSolution:
    """Minimise the regularised q-torsion energy over P1 fields vanishing on the boundary."""
    if q <= 1.0:
        raise ValueError("q must exceed 1")
    op = op or P1Operator(mesh)
    eps = default_eps(mesh, q) if eps_reg is None else float(eps_reg)
    if eps <= 0.0:
        raise ValueError("eps_reg must be positive")
    idx = op.interior
    b = op.load[idx]
    n = mesh.n_vertices

    def linear_solve(weight, guess):
        A = op.stiffness(weight)[idx][:, idx]
        x, _ = pcg(A, b, x0=guess[idx] if guess is not None else None, rtol=cg_rtol)
        out = np.zeros(n)
        out[idx] = x
        return out

    if q == 2.0:
        u = linear_solve(np.ones(mesh.triangles.shape[0]), u0)
        E = op.energy(u, q, eps)
        log.debug("picard it=1 energy=%.15e", E)
        return TorsionSolution(mesh, q, u, op.gradients(u), energy=E, iterations=1,
                               energy_history=[E], eps_reg=eps)

    if u0 is None:
        # best multiple of the q = 2 solution as the starting point
        u2 = linear_solve(np.ones(mesh.triangles.shape[0]), None)
        g2 = op.gradients(u2)
        c = (op.integral(u2) / np.sum(op.area * np.einsum("td,td->t", g2, g2) ** (q / 2.0))) ** (1.0 / (q - 1.0))
        u = c * u2
    else:
        u = np.array(u0, dtype=float)
        u[mesh.boundary_loop] = 0.0
    E = op.energy(u, q, eps)
    history = [E]
    for it in range(1, max_iter + 1):
        w = _weights(op.gradients(u), q, eps)
        u_star = linear_solve(w, u)
        step = 1.0
        for _ in range(40):
            trial = u + step * (u_star - u)
            E_trial = op.energy(trial, q, eps)
            if E_trial <= E:
                break
            step *= 0.5
        else:
            trial, E_trial = u, E
        rel = (E - E_trial) / abs(E_trial)
        u, E = trial, E_trial
        history.append(E)
        log.debug("picard it=%d energy=%.15e rel=%.3e step=%g", it, E, rel, step)
        if rel < tol:
            return TorsionSolution(mesh, q, u, op.gradients(u), energy=E, iterations=it,
                                   energy_history=history, eps_reg=eps)
    raise NoConvergence(f"Picard iteration did not converge in {max_iter} iterations (last rel {rel:.3e})")


def _boundary_normals(mesh: Mesh, body: ConvexBody | None) -> np.ndarray:
    if body is not None:
        return np.column_stack((np.cos(body.theta), np.sin(body.theta)))
    X = mesh.vertices[mesh.boundary_loop]
    tangent = np.roll(X, -1, axis=0) - np.roll(X, 1, axis=0)
    nrm = np.column_stack((tangent[:, 1], -tangent[:, 0]))
    return nrm / np.linalg.norm(nrm, axis=1)[:, None]


def boundary_gradient(
    sol: TorsionSolution,
    body: ConvexBody | None = None,
    method: str = "flux",
    op: P1Operator | None = None,
) -> np.ndarray:
    """|grad u| at the boundary nodes.

    ``"average"``: angle-weighted mean of incident triangle gradients projected on
    the outward normal.  ``"flux"``: the Galerkin residual at boundary nodes gives
    int |grad u|^{q-1} phi_i ds; dividing by the lumped boundary mass recovers the
    nodal flux, then |grad u| = flux^{1/(q-1)}.
    """
    mesh = sol.mesh
    nb = mesh.n_boundary
    normals = _boundary_normals(mesh, body)
    tri = mesh.triangles
    if method == "average":
        ang = triangle_angles(mesh.vertices, tri)
        gsum = np.zeros((mesh.n_vertices, 2))
        wsum = np.zeros(mesh.n_vertices)
        for k in range(3):
            np.add.at(gsum, tri[:, k], ang[:, k, None] * sol.grad)
            np.add.at(wsum, tri[:, k], ang[:, k])
        g = gsum[mesh.boundary_loop] / wsum[mesh.boundary_loop, None]
        values = np.maximum(0.0, -np.einsum("id,id->i", g, normals))
    elif method == "flux":
        op = op or P1Operator(mesh)
        w = _weights(sol.grad, sol.q, sol.eps_reg) if sol.q != 2.0 else np.ones(tri.shape[0])
        flux_local = np.einsum("tkd,td->tk", op.G, sol.grad) * (w * op.area)[:, None]
        residual = np.bincount(tri.ravel(), weights=flux_local.ravel(), minlength=mesh.n_vertices)
        residual -= op.load
        X = mesh.vertices[mesh.boundary_loop]
        edge = np.linalg.norm(np.roll(X, -1, axis=0) - X, axis=1)
        lumped = 0.5 * (edge + np.roll(edge, 1))
        flux = np.maximum(0.0, -residual[mesh.boundary_loop] / lumped)
        values = flux ** (1.0 / (sol.q - 1.0))
    else:
        raise ValueError(f"unknown gradient recovery method {method!r}")
    if values.size != nb or values.min() <= 1e-12:
        raise DegenerateGradient(f"boundary gradient min {values.min():.3e} at node {int(np.argmin(values))}")
    return values


def rigidity(sol: TorsionSolution, body: ConvexBody) -> tuple[float, float]:
    """Volume form int u and the Pohozaev boundary form of the normalised rigidity."""
    q = sol.q
    ba = (q - 1.0) / (q + N_DIM * (q - 1.0))
    op_area = sol.mesh.areas
    T_vol = float(np.sum(op_area * sol.u[sol.mesh.triangles].mean(axis=1)))
    s = body.support
    T_bdry = ba * float(np.sum(s.h * sol.boundary_grad**q * s.radius_of_curvature) * s.dtheta)
    return T_vol, T_bdry


def solve_torsion(body: ConvexBody, q: float, target_size: float = 0.04,
                  config: SolverConfig | None = None, mesh: Mesh | None = None,
                  u0: np.ndarray | None = None) -> TorsionSolution:
    """Mesh the body, solve, recover the boundary gradient and both rigidity values."""
    config = config or SolverConfig()
    mesh = mesh if mesh is not None else generate_mesh(body, target_size)
    op = P1Operator(mesh)
    sol = solve_qlaplace(mesh, q, config.eps_reg, config.tol, config.max_iter, config.cg_rtol, u0=u0, op=op)
    sol.boundary_grad = boundary_gradient(sol, body, config.gradient_method, op=op)
    sol.T_tilde, sol.T_tilde_boundary = rigidity(sol, body)
    return sol


def _fit_hessians(mesh: Mesh, u: np.ndarray, k: int = 19) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares quadratic fit of nodal u around each boundary node.

    Returns per-node gradients (nb, 2) and Hessians (nb, 2, 2) at the boundary nodes.
    """
    from scipy.spatial import cKDTree

    pts = mesh.vertices
    centres = pts[mesh.boundary_loop]
    _, nbr = cKDTree(pts).query(centres, k=k)
    grads = np.empty((centres.shape[0], 2))
    hess = np.empty((centres.shape[0], 2, 2))
    for i, (c, idx) in enumerate(zip(centres, nbr)):
        d = pts[idx] - c
        scale = np.abs(d).max()
        dx, dy = d[:, 0] / scale, d[:, 1] / scale
        A = np.column_stack((np.ones_like(dx), dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy))
        coef, *_ = np.linalg.lstsq(A, u[idx], rcond=None)
        grads[i] = coef[1:3] / scale
        hess[i] = np.array([[coef[3], coef[4]], [coef[4], coef[5]]]) / scale**2
    return grads, hess


@dataclass
class BoundaryIdentityReport:
    tangential_measured: np.ndarray
    tangential_predicted: np.ndarray
    normal_measured: np.ndarray
    normal_predicted: np.ndarray
    normal_predicted_curvature: np.ndarray

    @property
    def tangential_residual(self) -> np.ndarray:
        return self.tangential_measured - self.tangential_predicted

    @property
    def normal_residual(self) -> np.ndarray:
        return self.normal_measured - self.normal_predicted

    def summary(self) -> dict:
        return {
            "tangential_measured_mean": float(self.tangential_measured.mean()),
            "tangential_predicted_mean": float(self.tangential_predicted.mean()),
            "tangential_residual_max": float(np.abs(self.tangential_residual).max()),
            "tangential_residual_mean": float(np.abs(self.tangential_residual).mean()),
            "normal_measured_mean": float(self.normal_measured.mean()),
            "normal_predicted_mean": float(self.normal_predicted.mean()),
            "normal_residual_max": float(np.abs(self.normal_residual).max()),
            "normal_residual_mean": float(np.abs(self.normal_residual).mean()),
            "normal_predicted_curvature_mean": float(self.normal_predicted_curvature.mean()),
            "normal_curvature_residual_max": float(
                np.abs(self.normal_measured - self.normal_predicted_curvature).max()
            ),
        }


def boundary_identity_check(sol: TorsionSolution, body: ConvexBody, q: float | None = None) -> BoundaryIdentityReport:
    """Compare fitted boundary second derivatives of u with the support-function identities.

    Tangential: (D2u e).e = -K |grad u|.  Normal, as the cofactor-trace form
    (K |grad u| c (h''+h) - |grad u|^{2-q}) / (q-1), which in the plane reduces to
    (|grad u| - |grad u|^{2-q}) / (q-1).  Splitting the q-Laplacian into normal and
    tangential parts instead gives (K |grad u| - |grad u|^{2-q}) / (q-1); the two
    agree only where K = 1, so both are reported.
    """
    q = sol.q if q is None else q
    _, H = _fit_hessians(sol.mesh, sol.u)
    t = body.theta
    x = np.column_stack((np.cos(t), np.sin(t)))
    e = np.column_stack((-np.sin(t), np.cos(t)))
    g = sol.boundary_grad
    tang = np.einsum("ij,ijk,ik->i", e, H, e)
    norm = np.einsum("ij,ijk,ik->i", x, H, x)
    K = body.K
    trace = (N_DIM - 1) / K  # cofactor contracted with (h_ij + h delta_ij)
    tang_pred = -K * g
    norm_pred = (K * g * trace - g ** (2.0 - q)) / (q - 1.0)
    norm_pred_curv = (K * g - g ** (2.0 - q)) / (q - 1.0)
    return BoundaryIdentityReport(tang, tang_pred, norm, norm_pred, norm_pred_curv)
