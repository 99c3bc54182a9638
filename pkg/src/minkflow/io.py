"""CSV/JSON readers and writers for bodies, densities, meshes and time series."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import BadGrid, ConfigError
from .geometry import TWO_PI, SupportFn, build_support_fn
from .mesh import Mesh


def write_body(path, s: SupportFn) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "h"])
        for t, v in zip(s.theta, s.h):
            w.writerow([repr(float(t)), repr(float(v))])


def read_table(path, columns: tuple[str, ...]) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in columns):
            raise ConfigError(f"{path}: expected header with columns {','.join(columns)}")
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    try:
        return {c: np.array([float(r[c]) for r in rows]) for c in columns}
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def read_body(path) -> SupportFn:
    """Read a ``theta,h`` table; theta must be the uniform grid 2 pi i / N."""
    table = read_table(path, ("theta", "h"))
    theta, h = table["theta"], table["h"]
    N = theta.size
    expected = TWO_PI * np.arange(N) / N
    if np.any(np.diff(theta) <= 0.0) or np.max(np.abs(theta - expected)) > 1e-9:
        raise BadGrid(f"{path}: theta must be the uniform grid 2 pi i / N starting at 0")
    return build_support_fn(h)


def resample_periodic(theta: np.ndarray, values: np.ndarray, N: int) -> np.ndarray:
    """Periodic linear interpolation of a tabulated function onto the N-point grid."""
    order = np.argsort(np.mod(theta, TWO_PI))
    x = np.mod(theta, TWO_PI)[order]
    y = np.asarray(values, dtype=float)[order]
    grid = TWO_PI * np.arange(N) / N
    return np.interp(grid, x, y, period=TWO_PI)


def write_densities(path, theta: np.ndarray, density_v: np.ndarray, density_x: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle", "density_v", "density_x"])
        for row in zip(theta, density_v, density_x):
            w.writerow([repr(float(x)) for x in row])


def write_mesh(prefix, mesh: Mesh) -> tuple[Path, Path]:
    vpath, tpath = Path(f"{prefix}_vertices.csv"), Path(f"{prefix}_triangles.csv")
    with open(vpath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "boundary"])
        on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
        on_boundary[mesh.boundary_loop] = True
        for (x, y), b in zip(mesh.vertices, on_boundary):
            w.writerow([repr(float(x)), repr(float(y)), int(b)])
    with open(tpath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "c"])
        w.writerows(mesh.triangles.tolist())
    return vpath, tpath


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError(f"refusing to emit non-finite number {obj}")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    return obj


def dumps(obj, **kw) -> str:
    return json.dumps(_finite(obj), allow_nan=False, **kw)
