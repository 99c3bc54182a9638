"""Torsional measures on the circle of directions and the finite-difference referee.

All circle integrals use the trapezoid rule on the shared uniform grid.  Arc
integrals integrate the periodic cubic spline through the same samples, which
reproduces the trapezoid total over a full period.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonConvex, NonConvexPerturbation, NonPositive
from .geometry import (
    N_DIM,
    TWO_PI,
    ConvexBody,
    SupportFn,
    build_support_fn,
    make_body,
    periodic_integral,
    periodic_spline,
    support_from_radial,
)
from .oracles import FDResult, fd_derivative
from .torsion import SolverConfig, TorsionSolution, solve_torsion


def ba_constant(q: float, n: int = N_DIM) -> float:
    return (q - 1.0) / (q + n * (q - 1.0))


def q_torsional_measure_density(body: ConvexBody, torsion: TorsionSolution) -> np.ndarray:
    """Density of the q-torsional measure in the normal angle: |grad u|^q (h'' + h)."""
    return torsion.boundary_grad**torsion.q * body.support.radius_of_curvature


def gradient_on_rays(body: ConvexBody, torsion: TorsionSolution) -> np.ndarray:
    """|grad u| at the boundary point on each grid ray v_j (trace composed with the radial map)."""
    return periodic_spline(body.phi, torsion.boundary_grad)(body.theta)


@dataclass(eq=False)
class DualMeasureDensity:
    p: float
    q: float
    n: int
    ba: float
    density_v: np.ndarray
    density_x: np.ndarray
    total: float
    total_x: float
    _dv: Callable = field(repr=False, default=None)
    _dx: Callable = field(repr=False, default=None)

    @property
    def gap(self) -> float:
        return abs(self.total - self.total_x) / abs(self.total)

    @property
    def spline_v(self):
        if self._dv is None:
            self._dv = periodic_spline(_grid(self.density_v.size), self.density_v)
        return self._dv

    @property
    def spline_x(self):
        if self._dx is None:
            self._dx = periodic_spline(_grid(self.density_x.size), self.density_x)
        return self._dx


def _grid(N: int) -> np.ndarray:
    return TWO_PI * np.arange(N) / N


def dual_measure(body: ConvexBody, torsion: TorsionSolution, p: float) -> DualMeasureDensity:
    if p == 0.0:
        raise ValueError("p must be nonzero")
    q, n = torsion.q, N_DIM
    ba = ba_constant(q, n)
    s = body.support
    grad_v = gradient_on_rays(body, torsion)
    density_v = ba * body.rho**p * grad_v**q
    density_x = ba * (s.dh**2 + s.h**2) ** ((p - n) / 2.0) * s.h * torsion.boundary_grad**q * s.radius_of_curvature
    step = s.dtheta
    return DualMeasureDensity(
        p, q, n, ba, density_v, density_x, float(density_v.sum() * step), float(density_x.sum() * step)
    )


@dataclass
class ArcMeasure:
    lo: float
    hi: float
    value_v: float
    value_x: float

    @property
    def gap(self) -> float:
        return abs(self.value_v - self.value_x) / max(abs(self.value_v), abs(self.value_x))

    def as_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "value_v": self.value_v, "value_x": self.value_x}


def measure_of_arc(body: ConvexBody, dual: DualMeasureDensity, lo: float, hi: float) -> ArcMeasure:
    """Dual measure of the normal-angle arc [lo, hi], through both representations."""
    if not 0.0 < hi - lo <= TWO_PI + 1e-12:
        raise ValueError("arc length must lie in (0, 2 pi]")
    if hi - lo >= TWO_PI - 1e-12:
        return ArcMeasure(lo, hi, dual.total, dual.total_x)
    a, b = body.alpha_star(lo, hi)
    return ArcMeasure(lo, hi, periodic_integral(dual.spline_v, a, b), periodic_integral(dual.spline_x, lo, hi))


def dual_mixed(body1: ConvexBody, torsion1: TorsionSolution, body2: ConvexBody, p: float) -> float:
    """Dual mixed rigidity: (b/a) int rho_2^p rho_1^{n-p} |grad u_1(r_1(v))|^q dv."""
    if body1.N != body2.N:
        raise ValueError("bodies must share the angle grid")
    q, n = torsion1.q, N_DIM
    grad_v = gradient_on_rays(body1, torsion1)
    integrand = body2.rho**p * body1.rho ** (n - p) * grad_v**q
    return ba_constant(q, n) * float(integrand.sum() * body1.support.dtheta)


def dual_rigidity(body: ConvexBody, torsion: TorsionSolution, p: float) -> float:
    return dual_measure(body, torsion, p).total


# ---------------------------------------------------------------------------
# variational referee


@dataclass(frozen=True, eq=False)
class PerturbationFamily:
    """``wulff-log``: log h_s = log h + s f.  ``radial-log``: log rho_s = log rho + s g."""

    base: SupportFn
    direction: np.ndarray
    s_values: tuple[float, ...] = (1e-3,)
    mode: str = "wulff-log"

    def __post_init__(self):
        if self.mode not in ("wulff-log", "radial-log"):
            raise ValueError(f"unknown perturbation mode {self.mode!r}")
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float))
        if self.direction.shape != self.base.h.shape:
            raise ValueError("direction must be sampled on the base grid")

    def realize(self, s: float) -> SupportFn:
        try:
            if self.mode == "wulff-log":
                return build_support_fn(self.base.h * np.exp(s * self.direction))
            rho = make_body(self.base).rho
            return support_from_radial(rho * np.exp(s * self.direction))
        except (NonConvex, NonPositive) as exc:
            raise NonConvexPerturbation(f"perturbed body at s = {s:g} is not strictly convex: {exc}") from exc


@dataclass
class RefereeReport:
    functional: str
    mode: str
    p: float | None
    q: float
    s: float
    value: float
    measured: FDResult
    predicted: float | None
    predicted_formula: str
    scaling: float | None
    extra: dict = field(default_factory=dict)

    @property
    def ratio_predicted(self) -> float | None:
        if self.predicted in (None, 0.0):
            return None
        return self.measured.richardson / self.predicted

    @property
    def ratio_scaling(self) -> float | None:
        if self.scaling in (None, 0.0):
            return None
        return self.measured.richardson / self.scaling

    def as_dict(self) -> dict:
        return {
            "functional": self.functional,
            "mode": self.mode,
            "p": self.p,
            "q": self.q,
            "s": self.s,
            "value": self.value,
            "measured": self.measured.as_dict(),
            "predicted": self.predicted,
            "predicted_formula": self.predicted_formula,
            "scaling": self.scaling,
            "ratio_predicted": self.ratio_predicted,
            "ratio_scaling": self.ratio_scaling,
            **self.extra,
        }


def variational_referee(
    family: PerturbationFamily,
    functional: str,
    q: float,
    p: float | None = None,
    target_size: float = 0.04,
    config: SolverConfig | None = None,
    s: float | None = None,
) -> RefereeReport:
    """Central-difference derivative of T~ or Q~ along ``family`` against the closed-form predictions.

    Reported predictions:
      T~, radial-log : int g rho^n |grad u|^q dv
      T~, wulff-log  : int f h |grad u|^q dS
      Q~, wulff-log  : p (1+q) int f dQ~  (the claimed constant), and p int f dQ~ in ``extra``
    For a constant direction c the scaling law gives c (n + q') T~ or c (p + q') Q~.
    """
    if functional not in ("T", "Q"):
        raise ValueError("functional must be 'T' or 'Q'")
    if functional == "Q" and (p is None or p == 0.0):
        raise ValueError("Q~ needs a nonzero p")
    config = config or SolverConfig()
    s = family.s_values[0] if s is None else s
    n = N_DIM
    qc = q / (q - 1.0)

    def value_of(support: SupportFn) -> float:
        body = make_body(support)
        sol = solve_torsion(body, q, target_size, config)
        return sol.T_tilde if functional == "T" else dual_measure(body, sol, p).total

    for t in (s, -s, s / 2, -s / 2):
        family.realize(t)
    measured = fd_derivative(lambda t: value_of(family.realize(t)), s)

    body = make_body(family.base)
    sol = solve_torsion(body, q, target_size, config)
    g = family.direction
    extra: dict = {}
    if functional == "T":
        value = sol.T_tilde
        if family.mode == "radial-log":
            grad_v = gradient_on_rays(body, sol)
            predicted = float(np.sum(g * body.rho**n * grad_v**q) * body.support.dtheta)
            formula = "int g rho^n |grad u|^q dv"
        else:
            predicted = float(np.sum(g * body.h * q_torsional_measure_density(body, sol)) * body.support.dtheta)
            formula = "int f h |grad u|^q dS"
        exponent = n + qc
    else:
        dual = dual_measure(body, sol, p)
        value = dual.total
        integral = float(np.sum(g * dual.density_x) * body.support.dtheta)
        if family.mode == "wulff-log":
            predicted = p * (1.0 + q) * integral
            formula = "p (1+q) int f dQ"
            extra["predicted_log_sum"] = p * integral
        else:
            predicted = None
            formula = "none"
        exponent = p + qc
    constant = np.ptp(g) <= 1e-14 * max(1.0, np.abs(g).max())
    scaling = float(g[0] * exponent * value) if constant else None
    return RefereeReport(functional, family.mode, p, q, s, value, measured, predicted, formula, scaling, extra)
