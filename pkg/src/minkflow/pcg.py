"""Jacobi-preconditioned conjugate gradient for sparse SPD systems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NoConvergence, SingularSystem


@dataclass
class CGInfo:
    iterations: int
    residual: float


def pcg(
    A: sp.spmatrix,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    rtol: float = 1e-12,
    max_iter: int | None = None,
) -> tuple[np.ndarray, CGInfo]:
    """Solve ``A x = b`` with a diagonal preconditioner.

    Stops when ``||b - A x|| <= rtol * ||b||``.  All reductions are plain numpy
    dot products on fixed-order arrays, so repeated solves are bit-identical.
    """
    A = sp.csr_matrix(A)
    n = b.size
    diag = A.diagonal()
    if not np.all(np.isfinite(diag)) or diag.min() <= 0.0:
        raise SingularSystem("matrix diagonal is not positive and finite")
    inv_d = 1.0 / diag
    max_iter = max_iter or max(10 * n, 100)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    norm_b = float(np.sqrt(b @ b))
    if norm_b == 0.0:
        return np.zeros(n), CGInfo(0, 0.0)
    tol = rtol * norm_b
    res = float(np.sqrt(r @ r))
    if res <= tol:
        return x, CGInfo(0, res / norm_b)
    z = inv_d * r
    d = z.copy()
    rz = float(r @ z)
    for k in range(1, max_iter + 1):
        Ad = A @ d
        dAd = float(d @ Ad)
        if dAd <= 0.0:
            raise SingularSystem("matrix is not positive definite along a search direction")
        step = rz / dAd
        x += step * d
        r -= step * Ad
        res = float(np.sqrt(r @ r))
        if res <= tol:
            return x, CGInfo(k, res / norm_b)
        z = inv_d * r
        rz_new = float(r @ z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise NoConvergence(f"PCG stalled at relative residual {res / norm_b:.3e} after {max_iter} iterations")
