"""Independent reference values: radial ball solutions, a brute-force radial
function, scaling laws and a finite-difference harness.

Nothing here calls into the interpolation or finite-element code paths it is
used to check, except ``scaling_suite`` which exercises the solver on purpose.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np

from .geometry import SupportFn

UNIT_BALL_VOLUME = {2: math.pi}


@dataclass(frozen=True)
class BallOracle:
    R: float
    n: int
    q: float

    @property
    def qprime(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def omega(self) -> float:
        return UNIT_BALL_VOLUME[self.n]

    def u_profile(self, r):
        c = (self.q - 1.0) / self.q * self.n ** (-1.0 / (self.q - 1.0))
        return c * (self.R**self.qprime - np.asarray(r, dtype=float) ** self.qprime)

    @property
    def grad_boundary(self) -> float:
        return (self.R / self.n) ** (1.0 / (self.q - 1.0))

    @property
    def u_centre(self) -> float:
        return float(self.u_profile(0.0))

    @property
    def T_tilde(self) -> float:
        n, qp = self.n, self.qprime
        return n ** (-1.0 / (self.q - 1.0)) * self.omega * self.R ** (n + qp) / (n + qp)

    @property
    def T_tilde_pohozaev(self) -> float:
        """(b/a) h |grad u|^q |boundary| evaluated in closed form."""
        n, q = self.n, self.q
        ba = (q - 1.0) / (q + n * (q - 1.0))
        surface = n * self.omega * self.R ** (n - 1)
        return ba * self.R * self.grad_boundary**q * surface

    def _mp_profile(self):
        q, n = self.q, self.n
        c = mpmath.mpf(q - 1) / q * mpmath.mpf(n) ** (-1 / mpmath.mpf(q - 1))
        R = mpmath.mpf(self.R)
        return lambda r: c * (R**self.qprime - r**self.qprime)

    def boundary_slope(self, dps: int = 40) -> float:
        """-u'(R) by high-precision numerical differentiation of the profile."""
        with mpmath.workdps(dps):
            return float(-mpmath.diff(self._mp_profile(), mpmath.mpf(self.R)))

    def ode_residual(self, radii, dps: int = 40) -> float:
        """max |r^{1-n} (r^{n-1} |u'|^{q-2} u')' + 1| by high-precision numerical differentiation."""
        n, q = self.n, self.q
        with mpmath.workdps(dps):
            u = self._mp_profile()
            flux = lambda r: r ** (n - 1) * abs(mpmath.diff(u, r)) ** (q - 2) * mpmath.diff(u, r)
            worst = mpmath.mpf(0)
            for r in radii:
                r = mpmath.mpf(r)
                worst = max(worst, abs(r ** (1 - n) * mpmath.diff(flux, r) + 1))
            return float(worst)


def ball_torsion(R: float, n: int, q: float) -> BallOracle:
    if R <= 0.0 or q <= 1.0 or n != 2:
        raise ValueError("ball oracle needs R > 0, q > 1, n = 2")
    oracle = BallOracle(R, n, q)
    if abs(oracle.T_tilde_pohozaev - oracle.T_tilde) > 1e-12 * oracle.T_tilde:
        raise AssertionError("closed-form volume and boundary rigidity disagree")
    return oracle


def _trig_coefficients(h: np.ndarray) -> np.ndarray:
    return np.fft.rfft(h) / h.size


def _trig_eval(coef: np.ndarray, N: int, theta: np.ndarray) -> np.ndarray:
    k = np.arange(coef.size)
    w = np.full(coef.size, 2.0)
    w[0] = 1.0
    if N % 2 == 0:
        w[-1] = 1.0
    phase = np.exp(1j * np.multiply.outer(theta, k))
    return (phase * (w * coef)).real.sum(axis=-1)


def brute_force_radial(
    s: SupportFn | Callable[[np.ndarray], np.ndarray],
    v,
    refine: int = 16,
    N: int | None = None,
    polish: bool = True,
) -> np.ndarray:
    """rho(v) = min over theta with cos(theta - v) > 0 of h(theta) / cos(theta - v).

    A sampled support function is extended by trigonometric interpolation.  The
    minimum is located on a ``refine``-times finer grid and then polished by
    golden-section search inside the bracketing grid cell pair.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if isinstance(s, SupportFn):
        N = s.N
        coef = _trig_coefficients(np.asarray(s.h))
        h_of = lambda t: _trig_eval(coef, N, t)
    else:
        N = N or 256
        h_of = s
    M = refine * N
    th = 2.0 * np.pi * np.arange(M) / M
    hv = h_of(th)
    cos = np.cos(th[None, :] - v[:, None])
    ratio = np.where(cos > 1e-12, hv[None, :] / np.where(cos > 1e-12, cos, 1.0), np.inf)
    j = np.argmin(ratio, axis=1)
    best = ratio[np.arange(v.size), j]
    if not polish:
        return best
    d = 2.0 * np.pi / M
    a = th[j] - d
    b = th[j] + d
    g = lambda t: h_of(t) / np.cos(t - v)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(50):
        c1 = b - invphi * (b - a)
        c2 = a + invphi * (b - a)
        left = g(c1) < g(c2)
        a, b = np.where(left, a, c1), np.where(left, c2, b)
    return np.minimum(best, g(0.5 * (a + b)))


@dataclass
class FDResult:
    s: float
    d_s: float
    d_half: float
    richardson: float

    def as_dict(self) -> dict:
        return {"s": self.s, "central": self.d_s, "central_half": self.d_half, "richardson": self.richardson}


def fd_derivative(evaluate: Callable[[float], float], s: float) -> FDResult:
    """Central differences at s and s/2 plus the Richardson combination (4 D(s/2) - D(s)) / 3."""
    if s <= 0.0:
        raise ValueError("step must be positive")
    d_s = (evaluate(s) - evaluate(-s)) / (2.0 * s)
    d_half = (evaluate(s / 2) - evaluate(-s / 2)) / s
    return FDResult(s, d_s, d_half, (4.0 * d_half - d_s) / 3.0)


def scaling_suite(support: SupportFn, q: float, p: float, c: float, target_size: float = 0.04, config=None) -> dict:
    """Solve on the body and its dilate by ``c``; compare log-ratios with the homogeneity degrees."""
    from .geometry import make_body
    from .measures import dual_measure
    from .torsion import solve_torsion

    if c <= 0.0:
        raise ValueError("c must be positive")
    body = make_body(support)
    big = make_body(support.scaled(c))
    s0 = solve_torsion(body, q, target_size, config)
    s1 = solve_torsion(big, q, target_size, config)
    T0, T1 = s0.T_tilde, s1.T_tilde
    Q0, Q1 = dual_measure(body, s0, p).total, dual_measure(big, s1, p).total
    qp = q / (q - 1.0)
    report = {
        "c": c,
        "T_ratio": T1 / T0,
        "Q_ratio": Q1 / Q0,
        "T_expected_exponent": 2 + qp,
        "Q_expected_exponent": p + qp,
        "T_exponent": None,
        "Q_exponent": None,
    }
    if c != 1.0:
        report["T_exponent"] = math.log(T1 / T0) / math.log(c)
        report["Q_exponent"] = math.log(Q1 / Q0) / math.log(c)
    return report


def _check(name: str, expected: float, measured: float, tolerance: float, relative: bool = False) -> dict:
    err = abs(measured - expected)
    if relative:
        err /= abs(expected)
    return {"check": name, "expected": expected, "measured": measured, "tolerance": tolerance,
            "pass": bool(err <= tolerance)}


def verify_suite(N: int = 256) -> list[dict]:
    """Oracle self-consistency checks; each entry is {check, expected, measured, tolerance, pass}."""
    from .geometry import disk, ellipse, make_body

    out: list[dict] = []
    radii = np.linspace(0.05, 0.95, 7)
    for q in (1.5, 2.0, 3.0, 5.0):
        for R in (0.5, 1.0, 2.0):
            o = ball_torsion(R, 2, q)
            out.append(_check(f"ball ode residual q={q:g} R={R:g}", 0.0, o.ode_residual(R * radii), 1e-8))
            out.append(_check(f"ball pohozaev q={q:g} R={R:g}", o.T_tilde, o.T_tilde_pohozaev, 1e-12, True))
            out.append(_check(f"ball boundary value q={q:g} R={R:g}", 0.0, float(o.u_profile(R)), 1e-12))
            out.append(_check(f"ball boundary slope q={q:g} R={R:g}", o.grad_boundary, o.boundary_slope(), 1e-12, True))
    out.append(_check("ball T q=2 R=1", math.pi / 8, ball_torsion(1.0, 2, 2.0).T_tilde, 1e-12, True))
    out.append(_check("ball T q=3 R=1", math.pi * math.sqrt(2) / 7, ball_torsion(1.0, 2, 3.0).T_tilde, 1e-12, True))
    out.append(_check("ball T q=2 R=2", 2 * math.pi, ball_torsion(2.0, 2, 2.0).T_tilde, 1e-12, True))

    v = 2.0 * np.pi * np.arange(N) / N
    d = disk(2.0, N)
    out.append(_check("brute radial disk R=2", 0.0, float(np.max(np.abs(brute_force_radial(d, v) - 2.0))), 1e-12))
    e = ellipse(2.0, 1.0, N)
    body = make_body(e)
    bf = brute_force_radial(e, v)
    out.append(_check("brute vs interpolated radial, ellipse 2:1", 0.0,
                      float(np.max(np.abs(bf - body.rho) / bf)), 1e-6))
    exact = 1.0 / np.sqrt(np.cos(v) ** 2 / 4.0 + np.sin(v) ** 2)
    out.append(_check("brute radial vs ray intersection, ellipse 2:1", 0.0,
                      float(np.max(np.abs(bf - exact) / exact)), 1e-10))

    k, F0, step = 1.7, 2.5, 0.05
    fd = fd_derivative(lambda s: F0 * math.exp(k * s), step)
    err_c, err_r = abs(fd.d_s - k * F0), abs(fd.richardson - k * F0)
    gain = err_c / max(err_r, 1e-300)
    out.append({"check": "richardson error reduction on exp(ks)", "expected": 4.0, "measured": gain,
                "tolerance": 0.0, "pass": bool(gain >= 4.0)})
    out.append(_check("central difference of s^2", 0.0, fd_derivative(lambda s: s * s, 0.1).d_s, 1e-14))
    return out
