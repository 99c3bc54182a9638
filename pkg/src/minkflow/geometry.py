"""Support-function calculus for planar convex bodies on a periodic angle grid.

A body is stored through its support function sampled at ``theta_i = 2 pi i / N``.
Everything else (boundary points, curvature, radial function, radial Gauss map)
is derived from those samples.  The normal-angle grid and the radial-angle grid
are the same set of nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BadGrid, ConfigError, NonConvex, NonPositive, WindingError

TWO_PI = 2.0 * np.pi
N_DIM = 2


def angle_grid(N: int) -> np.ndarray:
    return TWO_PI * np.arange(N) / N


def periodic_d1(y: np.ndarray, step: float) -> np.ndarray:
    """Fourth-order periodic central first derivative."""
    return (np.roll(y, 2) - 8.0 * np.roll(y, 1) + 8.0 * np.roll(y, -1) - np.roll(y, -2)) / (12.0 * step)


def periodic_d2(y: np.ndarray, step: float) -> np.ndarray:
    """Fourth-order periodic central second derivative."""
    return (
        -np.roll(y, 2) + 16.0 * np.roll(y, 1) - 30.0 * y + 16.0 * np.roll(y, -1) - np.roll(y, -2)
    ) / (12.0 * step**2)


def periodic_spline(x: np.ndarray, y: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Cubic spline through periodic data ``y(x)``, ``x`` increasing within one period.

    The returned callable accepts any real argument and wraps it into the period
    starting at ``x[0]``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xs = np.append(x, x[0] + TWO_PI)
    ys = np.append(y, y[0])
    cs = CubicSpline(xs, ys, bc_type="periodic")
    x0 = x[0]

    def evaluate(t):
        t = np.asarray(t, dtype=float)
        return cs(x0 + np.mod(t - x0, TWO_PI))

    evaluate.spline = cs  # type: ignore[attr-defined]
    return evaluate


def periodic_integral(spline_fn, lo: float, hi: float) -> float:
    """Integral of a ``periodic_spline`` over ``[lo, hi]`` with ``hi - lo`` up to one period."""
    cs = spline_fn.spline
    x0 = cs.x[0]
    a = x0 + np.mod(lo - x0, TWO_PI)
    b = a + (hi - lo)
    if b <= x0 + TWO_PI + 1e-15:
        return float(cs.integrate(a, min(b, x0 + TWO_PI)))
    return float(cs.integrate(a, x0 + TWO_PI) + cs.integrate(x0, b - TWO_PI))


@dataclass(frozen=True)
class ProblemSpec:
    """Exponents and prescribed density of one dual Minkowski problem.

    ``f`` is sampled on the normal-angle grid; its length fixes ``N``.
    """

    q: float
    p: float
    f: np.ndarray
    even_mode: bool = False
    n: int = N_DIM

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        object.__setattr__(self, "f", f)
        if self.n != N_DIM:
            raise ConfigError("only the planar case n = 2 is implemented")
        if not self.q > 1.0:
            raise ConfigError(f"q must exceed 1, got {self.q}")
        if self.p == 0.0:
            raise ConfigError("p = 0 is excluded (the functional carries 1/p)")
        if not self.p < self.n:
            raise ConfigError(f"p must be below n = {self.n}, got {self.p}")
        if f.ndim != 1 or not np.all(np.isfinite(f)) or f.min() <= 0.0:
            raise ConfigError("density f must be finite and strictly positive on the grid")
        if self.p >= 0.0 and not self.even_mode:
            raise ConfigError("p >= 0 requires even_mode (origin-symmetric data)")
        if self.even_mode:
            if f.size % 2:
                raise ConfigError("even_mode needs an even grid size")
            shifted = np.roll(f, -f.size // 2)
            if np.max(np.abs(shifted - f) / f) > 1e-12:
                raise ConfigError("even_mode requires f(theta) = f(theta + pi)")

    @property
    def N(self) -> int:
        return self.f.size

    @property
    def ba(self) -> float:
        """The constant b/a = (q-1)/(q + n(q-1))."""
        return (self.q - 1.0) / (self.q + self.n * (self.q - 1.0))

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)


@dataclass(frozen=True, eq=False)
class SupportFn:
    h: np.ndarray
    dh: np.ndarray
    d2h: np.ndarray

    @property
    def N(self) -> int:
        return self.h.size

    @property
    def dtheta(self) -> float:
        return TWO_PI / self.N

    @cached_property
    def theta(self) -> np.ndarray:
        return angle_grid(self.N)

    @property
    def radius_of_curvature(self) -> np.ndarray:
        """Density of the surface area measure, d2h + h."""
        return self.d2h + self.h

    @cached_property
    def interp(self) -> Callable[[np.ndarray], np.ndarray]:
        return periodic_spline(self.theta, self.h)

    def scaled(self, c: float) -> "SupportFn":
        return SupportFn(c * self.h, c * self.dh, c * self.d2h)


def build_support_fn(samples: Sequence[float] | np.ndarray) -> SupportFn:
    h = np.array(samples, dtype=float)
    if h.ndim != 1:
        raise BadGrid("support samples must be one-dimensional")
    N = h.size
    if N < 16 or N % 2:
        raise BadGrid(f"grid size must be even and at least 16, got {N}")
    if not np.all(np.isfinite(h)):
        raise NonPositive("support samples must be finite")
    if h.min() <= 0.0:
        i = int(np.argmin(h))
        raise NonPositive(f"h[{i}] = {h[i]:.6g} <= 0: origin not interior")
    step = TWO_PI / N
    dh = periodic_d1(h, step)
    d2h = periodic_d2(h, step)
    s = d2h + h
    if s.min() <= 0.0:
        i = int(np.argmin(s))
        raise NonConvex(f"d2h + h = {s[i]:.6g} <= 0 at theta = {TWO_PI * i / N:.6g}")
    h.flags.writeable = False
    dh.flags.writeable = False
    d2h.flags.writeable = False
    return SupportFn(h, dh, d2h)


def support_from_callable(func: Callable[[np.ndarray], np.ndarray], N: int) -> SupportFn:
    return build_support_fn(func(angle_grid(N)))


def disk(R: float, N: int) -> SupportFn:
    return build_support_fn(np.full(N, float(R)))


def ellipse_support(a: float, b: float) -> Callable[[np.ndarray], np.ndarray]:
    """Support function of the origin-centred ellipse with semi-axes ``a`` (x) and ``b`` (y)."""
    return lambda t: np.sqrt((a * np.cos(t)) ** 2 + (b * np.sin(t)) ** 2)


def ellipse(a: float, b: float, N: int) -> SupportFn:
    return support_from_callable(ellipse_support(a, b), N)


def fourier(coeffs: Sequence[tuple[int, float, float]], N: int) -> SupportFn:
    """``h = sum a_k cos k t + b_k sin k t`` over ``(k, a_k, b_k)`` triples (k = 0 is the mean)."""
    t = angle_grid(N)
    h = np.zeros(N)
    for k, a_k, b_k in coeffs:
        h += a_k * np.cos(k * t) + b_k * np.sin(k * t)
    return build_support_fn(h)


def boundary_embedding(s: SupportFn) -> np.ndarray:
    """Boundary points X(theta) = h x + h' x_perp, shape (N, 2)."""
    c, sn = np.cos(s.theta), np.sin(s.theta)
    return np.column_stack((s.h * c - s.dh * sn, s.h * sn + s.dh * c))


def curvature(s: SupportFn) -> np.ndarray:
    r = s.radius_of_curvature
    if r.min() <= 0.0:
        raise NonConvex("radius of curvature is not positive")
    return 1.0 / r


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """A strictly convex body with all derived boundary data on the shared grid.

    ``phi[i]`` is the polar angle of ``X[i]`` (unwrapped, strictly increasing);
    ``rho[j]`` and ``alpha[j]`` are sampled at the radial angle ``v_j = theta_j``.
    """

    support: SupportFn
    X: np.ndarray
    K: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray
    J: np.ndarray
    _rho_of_v: Callable = field(repr=False)
    _alpha_of_v: Callable = field(repr=False)
    _phi_of_theta: Callable = field(repr=False)

    @property
    def N(self) -> int:
        return self.support.N

    @property
    def theta(self) -> np.ndarray:
        return self.support.theta

    @property
    def h(self) -> np.ndarray:
        return self.support.h

    @property
    def boundary_radius(self) -> np.ndarray:
        """|X(theta_i)|, i.e. rho evaluated at the radial angle phi_i."""
        return np.hypot(self.X[:, 0], self.X[:, 1])

    def rho_at(self, v) -> np.ndarray:
        return self._rho_of_v(v)

    def alpha_at(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return v + self._alpha_of_v(v)

    def phi_at(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return theta + self._phi_of_theta(theta)

    def alpha_star(self, lo: float, hi: float) -> tuple[float, float]:
        """Radial-angle arc of the boundary points whose normals lie in ``[lo, hi]``."""
        if not 0.0 < hi - lo <= TWO_PI + 1e-12:
            raise ValueError("arc length must lie in (0, 2 pi]")
        a = float(self.phi_at(lo))
        if hi - lo >= TWO_PI - 1e-12:
            return a, a + TWO_PI
        return a, float(self.phi_at(hi))

    def scaled(self, c: float) -> "ConvexBody":
        return make_body(self.support.scaled(c))


def _unwrapped_polar_angle(X: np.ndarray) -> np.ndarray:
    phi = np.unwrap(np.arctan2(X[:, 1], X[:, 0]))
    step = np.diff(phi)
    closing = phi[0] + TWO_PI - phi[-1]
    if step.min() <= 0.0 or closing <= 0.0:
        raise WindingError("boundary polar angle is not strictly increasing")
    if abs(phi[-1] - phi[0] + closing - TWO_PI) > 1e-9:
        raise WindingError("boundary does not wind once around the origin")
    return phi


def make_body(s: SupportFn) -> ConvexBody:
    X = boundary_embedding(s)
    K = curvature(s)
    phi = _unwrapped_polar_angle(X)
    theta = s.theta
    r = np.hypot(X[:, 0], X[:, 1])
    rho_of_v = periodic_spline(phi, r)
    alpha_of_v = periodic_spline(phi, theta - phi)
    phi_of_theta = periodic_spline(theta, phi - theta)
    v = theta
    rho = rho_of_v(v)
    alpha = v + alpha_of_v(v)
    J = rho**N_DIM / s.interp(alpha)
    for arr in (X, K, phi, rho, alpha, J):
        arr.flags.writeable = False
    return ConvexBody(s, X, K, phi, rho, alpha, J, rho_of_v, alpha_of_v, phi_of_theta)


def radial_function(b: ConvexBody) -> np.ndarray:
    return b.rho


def radial_gauss_maps(b: ConvexBody):
    """Return ``(alpha, alpha_star)``: samples of the radial Gauss map and the arc map."""
    return b.alpha, b.alpha_star


def jacobian_J(b: ConvexBody) -> np.ndarray:
    return b.J


def polar_support(s: SupportFn) -> SupportFn:
    """Support function of the polar body, h* = 1 / rho."""
    return build_support_fn(1.0 / make_body(s).rho)


def polar_body(s: SupportFn) -> ConvexBody:
    return make_body(polar_support(s))


def support_from_radial(rho: np.ndarray) -> SupportFn:
    """Support function of the star body with radial samples ``rho`` (assumed convex).

    Uses duality twice: the polar has support 1/rho, and h = 1 / rho_polar.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.min() <= 0.0:
        raise NonPositive("radial samples must be positive")
    return build_support_fn(1.0 / make_body(build_support_fn(1.0 / rho)).rho)


def is_even(values: np.ndarray, rtol: float = 1e-12) -> bool:
    values = np.asarray(values, dtype=float)
    if values.size % 2:
        return False
    shifted = np.roll(values, -values.size // 2)
    return bool(np.max(np.abs(shifted - values)) <= rtol * np.max(np.abs(values)))


def symmetrize(h: np.ndarray) -> np.ndarray:
    return 0.5 * (h + np.roll(h, -h.size // 2))


def anisotropy(h: np.ndarray) -> float:
    return float((h.max() - h.min()) / h.mean())
