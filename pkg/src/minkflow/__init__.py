"""Planar dual q-torsional Minkowski problem: geometry, torsion solver, measures and flow."""

from .errors import (
    BadGrid,
    ConfigError,
    DegenerateGradient,
    GuardViolation,
    MeshFailure,
    MinkflowError,
    NoConvergence,
    NonConvex,
    NonConvexPerturbation,
    NonPositive,
    SingularSystem,
    StepRejected,
    WindingError,
)
from .geometry import ConvexBody, ProblemSpec, SupportFn, build_support_fn, disk, ellipse, fourier, make_body
from .torsion import SolverConfig, TorsionSolution, solve_torsion

__version__ = "0.1.0"

__all__ = [
    "BadGrid",
    "ConfigError",
    "ConvexBody",
    "DegenerateGradient",
    "GuardViolation",
    "MeshFailure",
    "MinkflowError",
    "NoConvergence",
    "NonConvex",
    "NonConvexPerturbation",
    "NonPositive",
    "ProblemSpec",
    "SingularSystem",
    "SolverConfig",
    "StepRejected",
    "SupportFn",
    "TorsionSolution",
    "WindingError",
    "build_support_fn",
    "disk",
    "ellipse",
    "fourier",
    "make_body",
    "solve_torsion",
]
