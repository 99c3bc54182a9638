"""Normalised Gauss curvature flow for the planar dual Minkowski problem, in support-function form.

    dh/dt = -lambda f rho^{n-p} K / |grad u|^q + h

with rho the distance of the boundary point with normal theta, K = 1/(h'' + h)
and |grad u| the torsion gradient on the boundary.  Time stepping is explicit
Heun with halving on rejection; a fresh torsion solve backs every stage.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardViolation, MinkflowError, NonConvex, NonPositive, StepRejected
from .geometry import N_DIM, ConvexBody, ProblemSpec, SupportFn, build_support_fn, make_body, symmetrize
from .measures import ba_constant, gradient_on_rays
from .mesh import generate_mesh
from .torsion import SolverConfig, TorsionSolution, solve_torsion

log = logging.getLogger(__name__)

PHI_TOL = 1e-8


@dataclass
class FlowOptions:
    dt0: float = 1e-3
    dt_min: float = 1e-7
    t_max: float = 10.0
    tol_residual: float = 1e-3
    target_size: float = 0.04
    rescale: bool = True
    symmetrize: bool | None = None  # None: follow even_mode
    c_guard: float = 1e3
    cfl: float = 0.3
    max_retries: int = 30
    max_steps: int | None = None
    stop_at_tolerance: bool = True
    mesh_kind: str = "auto"
    solver: SolverConfig = field(default_factory=SolverConfig)


@dataclass(eq=False)
class FlowState:
    t: float
    body: ConvexBody
    torsion: TorsionSolution
    lam: float
    Q_tilde: float
    Phi: float
    residual_sup: float
    guards: tuple[float, float, float, float]

    @property
    def h(self) -> np.ndarray:
        return self.body.h


# ---------------------------------------------------------------------------
# pointwise quantities


def _dual_integral(body: ConvexBody, torsion: TorsionSolution, p: float) -> float:
    """Trapezoid value of the integral of rho^p |grad u|^q over the circle of rays."""
    g = gradient_on_rays(body, torsion)
    return float(np.sum(body.rho**p * g**torsion.q) * body.support.dtheta)


def compute_lambda(body: ConvexBody, torsion: TorsionSolution, f: np.ndarray, p: float) -> float:
    return _dual_integral(body, torsion, p) / float(np.sum(f) * body.support.dtheta)


def compute_phi(body: ConvexBody, torsion: TorsionSolution, f: np.ndarray, p: float) -> float:
    q = torsion.q
    mean_log = float(np.sum(np.log(body.h) * f) / np.sum(f))
    return mean_log - math.log(_dual_integral(body, torsion, p)) / (p * (1.0 + q))


def _speed(body: ConvexBody, torsion: TorsionSolution, f: np.ndarray, p: float, lam: float) -> np.ndarray:
    """lambda f rho^{n-p} K / |grad u|^q at the boundary nodes."""
    s = body.support
    rho = np.hypot(s.h, s.dh)
    K = 1.0 / s.radius_of_curvature
    return lam * f * rho ** (N_DIM - p) * K / torsion.boundary_grad**torsion.q


def rhs(body: ConvexBody, torsion: TorsionSolution, f: np.ndarray, p: float, lam: float | None = None) -> np.ndarray:
    lam = compute_lambda(body, torsion, f, p) if lam is None else lam
    return body.h - _speed(body, torsion, f, p, lam)


def residual(body: ConvexBody, torsion: TorsionSolution, f: np.ndarray, p: float, lam: float | None = None) -> float:
    lam = compute_lambda(body, torsion, f, p) if lam is None else lam
    return float(np.max(np.abs(_speed(body, torsion, f, p, lam) - body.h)) / np.max(body.h))


def stable_dt(body: ConvexBody, torsion: TorsionSolution, f: np.ndarray, p: float, lam: float, cfl: float) -> float:
    """Explicit step limit: the speed depends on h'' with coefficient speed * K."""
    D = float(np.max(_speed(body, torsion, f, p, lam) / body.support.radius_of_curvature))
    return cfl * body.support.dtheta**2 / D


def guards_of(body: ConvexBody) -> tuple[float, float, float, float]:
    K = 1.0 / body.support.radius_of_curvature
    return float(body.h.min()), float(body.h.max()), float(K.min()), float(K.max())


def check_guards(guards, c_guard: float) -> None:
    lo, hi = 1.0 / c_guard, c_guard
    for name, value in zip(("h_min", "h_max", "K_min", "K_max"), guards):
        if not lo <= value <= hi:
            raise GuardViolation(f"{name} = {value:.6g} left [{lo:g}, {hi:g}]", name, value)


# ---------------------------------------------------------------------------
# states and steps


class Flow:
    """Binds a problem to solver settings; holds the fixed mesh kind and Q~_0."""

    def __init__(self, spec: ProblemSpec, options: FlowOptions | None = None):
        self.spec = spec
        self.options = options or FlowOptions()
        sym = self.options.symmetrize
        self.symmetrize = spec.even_mode if sym is None else sym
        self.mesh_kind = self.options.mesh_kind
        self.Q0: float | None = None
        qc = spec.q / (spec.q - 1.0)
        self.rescale_exponent = spec.p + qc
        self.rescale = self.options.rescale
        if self.rescale and abs(self.rescale_exponent) < 1e-6:
            log.warning("p + q/(q-1) = %g is too close to zero; rescaling disabled", self.rescale_exponent)
            self.rescale = False

    def solve(self, body: ConvexBody, u0: np.ndarray | None = None) -> TorsionSolution:
        mesh = generate_mesh(body, self.options.target_size, self.mesh_kind)
        if u0 is not None and u0.size != mesh.n_vertices:
            u0 = None
        return solve_torsion(body, self.spec.q, self.options.target_size, self.options.solver, mesh=mesh, u0=u0)

    def state(self, body: ConvexBody, torsion: TorsionSolution, t: float) -> FlowState:
        f, p = self.spec.f, self.spec.p
        lam = compute_lambda(body, torsion, f, p)
        Q = ba_constant(self.spec.q) * _dual_integral(body, torsion, p)
        return FlowState(t, body, torsion, lam, Q, compute_phi(body, torsion, f, p),
                         residual(body, torsion, f, p, lam), guards_of(body))

    def initial_state(self, support: SupportFn) -> FlowState:
        if support.N != self.spec.N:
            raise ValueError(f"initial body has N = {support.N}, density has N = {self.spec.N}")
        body = make_body(support)
        if self.mesh_kind == "auto":
            self.mesh_kind = generate_mesh(body, self.options.target_size).kind
        st = self.state(body, self.solve(body), 0.0)
        self.Q0 = st.Q_tilde
        return st

    def dt_limit(self, state: FlowState) -> float:
        return stable_dt(state.body, state.torsion, self.spec.f, self.spec.p, state.lam, self.options.cfl)

    def _advance(self, h: np.ndarray) -> SupportFn:
        if not np.all(np.isfinite(h)):
            raise StepRejected("non-finite support values")
        try:
            return build_support_fn(h)
        except (NonConvex, NonPositive) as exc:
            raise StepRejected(f"convexity lost: {exc}") from exc

    def step(self, state: FlowState, dt: float) -> tuple[FlowState, dict]:
        """One Heun step.  Returns the new state and per-step diagnostics."""
        if dt < 0.0:
            raise ValueError("dt must be nonnegative")
        if dt == 0.0:
            return state, {"phi_flow": state.Phi, "Q_raw": state.Q_tilde, "scale": 1.0}
        f, p = self.spec.f, self.spec.p
        h = state.h
        k1 = rhs(state.body, state.torsion, f, p, state.lam)
        try:
            mid_body = make_body(self._advance(h + dt * k1))
            mid_sol = self.solve(mid_body, state.torsion.u)
            k2 = rhs(mid_body, mid_sol, f, p)
            h_new = h + 0.5 * dt * (k1 + k2)
            if self.symmetrize:
                h_new = symmetrize(h_new)
            body = make_body(self._advance(h_new))
            sol = self.solve(body, mid_sol.u)
        except StepRejected:
            raise
        except MinkflowError as exc:
            raise StepRejected(str(exc)) from exc
        new = self.state(body, sol, state.t + dt)
        info = {"phi_flow": new.Phi, "Q_raw": new.Q_tilde, "scale": 1.0}
        if self.rescale:
            c = (self.Q0 / new.Q_tilde) ** (1.0 / self.rescale_exponent)
            new = self.state(body.scaled(c), sol.scaled(c), new.t)
            info["scale"] = c
        if not all(math.isfinite(g) for g in new.guards):
            raise StepRejected("non-finite guard values")
        check_guards(new.guards, self.options.c_guard)
        return new, info


@dataclass
class TimeSeries:
    t: list[float] = field(default_factory=list)
    lam: list[float] = field(default_factory=list)
    phi: list[float] = field(default_factory=list)
    Qtilde: list[float] = field(default_factory=list)
    residual: list[float] = field(default_factory=list)
    hmin: list[float] = field(default_factory=list)
    hmax: list[float] = field(default_factory=list)
    dt: list[float] = field(default_factory=list)

    HEADER = ("t", "lambda", "phi", "Qtilde", "residual", "hmin", "hmax", "dt")

    def append(self, st: FlowState, dt: float) -> None:
        self.t.append(st.t)
        self.lam.append(st.lam)
        self.phi.append(st.Phi)
        self.Qtilde.append(st.Q_tilde)
        self.residual.append(st.residual_sup)
        self.hmin.append(st.guards[0])
        self.hmax.append(st.guards[1])
        self.dt.append(dt)

    def rows(self):
        return zip(self.t, self.lam, self.phi, self.Qtilde, self.residual, self.hmin, self.hmax, self.dt)

    def __len__(self) -> int:
        return len(self.t)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            for row in self.rows():
                w.writerow([repr(float(x)) for x in row])


@dataclass
class FlowResult:
    status: str
    state: FlowState
    series: TimeSeries
    summary: dict
    anisotropy_history: list[float] = field(default_factory=list)


def run(spec: ProblemSpec, initial: SupportFn, options: FlowOptions | None = None, callback=None) -> FlowResult:
    """Integrate until the residual drops below ``tol_residual``, ``t_max`` is reached or a guard trips."""
    flow = Flow(spec, options)
    opts = flow.options
    start = time.perf_counter()
    state = flow.initial_state(initial)
    check_guards(state.guards, opts.c_guard)
    series = TimeSeries()
    series.append(state, 0.0)
    aniso = [float(np.ptp(state.h) / state.h.mean())]

    steps = rejected = phi_violations = 0
    raw_drift = 0.0
    max_asym = 0.0
    status, reason = "TimedOut", ""
    dt = opts.dt0
    while True:
        if opts.stop_at_tolerance and state.residual_sup < opts.tol_residual:
            status = "Converged"
            break
        if state.t >= opts.t_max - 1e-12 or (opts.max_steps is not None and steps >= opts.max_steps):
            break
        trial = min(dt, flow.dt_limit(state), opts.t_max - state.t)
        halved = False
        for _ in range(opts.max_retries + 1):
            if trial < opts.dt_min:
                status, reason = "Aborted", f"step size fell below {opts.dt_min:g}"
                break
            try:
                new, info = flow.step(state, trial)
                break
            except StepRejected as exc:
                rejected += 1
                log.info("step rejected at t=%.6g dt=%.3g: %s", state.t, trial, exc)
                trial *= 0.5
                halved = True
            except GuardViolation as exc:
                status, reason = "Aborted", str(exc)
                break
        else:
            status, reason = "Aborted", "retry limit reached"
        if status == "Aborted":
            break
        if info["phi_flow"] - state.Phi > PHI_TOL:
            phi_violations += 1
        raw_drift += abs(info["Q_raw"] - state.Q_tilde) / state.Q_tilde
        if flow.symmetrize or spec.even_mode:
            h = new.h
            max_asym = max(max_asym, float(np.max(np.abs(h - np.roll(h, -h.size // 2)))))
        steps += 1
        dt = trial if halved else min(2.0 * dt, opts.dt0)
        state = new
        series.append(state, trial)
        aniso.append(float(np.ptp(state.h) / state.h.mean()))
        if callback is not None:
            callback(state, trial)

    elapsed = max(state.t, 0.0)
    drift = abs(state.Q_tilde - flow.Q0) / flow.Q0 / elapsed if elapsed > 0 else 0.0
    summary = {
        "status": status,
        "steps": steps,
        "rejected_steps": rejected,
        "phi_violations": phi_violations,
        "qtilde_drift_per_unit_time": drift,
        "qtilde_flow_drift_per_unit_time": raw_drift / elapsed if elapsed > 0 else 0.0,
        "final_residual": state.residual_sup,
        "final_time": state.t,
        "final_anisotropy": aniso[-1],
        "max_asymmetry": max_asym,
        "mesh_kind": flow.mesh_kind,
        "rescale": flow.rescale,
        "symmetrize": flow.symmetrize,
        "wall_time_seconds": time.perf_counter() - start,
    }
    if reason:
        summary["reason"] = reason
    return FlowResult(status, state, series, summary, aniso)
