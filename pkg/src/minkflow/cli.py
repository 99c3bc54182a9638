"""Command-line entry point: ``minkflow run | measure | variation | verify``.

Exit codes: 0 success/converged, 1 bad input or failed check, 2 flow timed out,
3 flow aborted by a guard or step-size floor.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError, MinkflowError
from .flow import FlowOptions, run
from .geometry import TWO_PI, ProblemSpec, SupportFn, build_support_fn, disk, ellipse, fourier, make_body
from .measures import PerturbationFamily, dual_measure, measure_of_arc, variational_referee
from .oracles import verify_suite
from .torsion import SolverConfig, solve_torsion

EXIT_OK, EXIT_INPUT, EXIT_TIMEOUT, EXIT_ABORT = 0, 1, 2, 3
STATUS_EXIT = {"Converged": EXIT_OK, "TimedOut": EXIT_TIMEOUT, "Aborted": EXIT_ABORT}

log = logging.getLogger("minkflow")


@dataclass
class RunConfig:
    q: float = 2.0
    p: float = -1.0
    f: str = "const:1"
    init: str = "disk:1"
    even_mode: bool = False
    N: int = 256
    dt0: float = 1e-3
    t_max: float = 10.0
    tol_residual: float = 1e-3
    target_size: float = 0.04
    eps_reg: float | None = None
    solver_tol: float = 1e-10
    solver_max_iter: int = 200
    rescale: bool = True
    symmetrize: bool | None = None
    c_guard: float = 1e3
    out: str = "minkflow-out"
    seed: int = 0  # reserved; runs are deterministic
    dump_mesh: bool = False

    def solver(self) -> SolverConfig:
        return SolverConfig(eps_reg=self.eps_reg, tol=self.solver_tol, max_iter=self.solver_max_iter)

    def flow_options(self) -> FlowOptions:
        return FlowOptions(dt0=self.dt0, t_max=self.t_max, tol_residual=self.tol_residual,
                           target_size=self.target_size, rescale=self.rescale, symmetrize=self.symmetrize,
                           c_guard=self.c_guard, solver=self.solver())


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if value is None or value == "None":
        return None
    if "bool" in kind:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {value!r}")
    try:
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot parse {value!r}") from None
    return str(value)


def load_config_file(path) -> dict:
    """Flat ``key = value`` lines (``#`` comments) or a JSON object; keys in snake or kebab case."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            raw[key.strip()] = value.strip()
    out = {}
    for key, value in raw.items():
        name = key.replace("-", "_")
        if name not in _FIELD_TYPES:
            raise ConfigError(f"{path}: unknown key {key!r}")
        out[name] = _coerce(name, value)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = load_config_file(args.config) if getattr(args, "config", None) else {}
    env_out = os.environ.get("MINKFLOW_OUT")
    if env_out:
        values["out"] = env_out
    for name in _FIELD_TYPES:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = _coerce(name, flag)
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# specification strings


def _trig_terms(body: str) -> tuple[float, list[tuple[int, float, float]]]:
    """``a0,k:a:b,k:a:b`` -> (a0, [(k, a_k, b_k), ...])."""
    parts = [p for p in body.split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty coefficient list")
    try:
        a0 = float(parts[0])
        terms = []
        for part in parts[1:]:
            k, a, b = part.split(":")
            terms.append((int(k), float(a), float(b)))
    except ValueError:
        raise ConfigError(f"bad coefficient list {body!r}; expected a0,k:a_k:b_k,...") from None
    if any(k < 1 for k, _, _ in terms):
        raise ConfigError("harmonic orders must be positive")
    return a0, terms


def parse_function(spec: str, N: int, even_mode: bool = False, what: str = "f") -> np.ndarray:
    """Sample ``const:c``, ``trig:a0,k:a:b,...`` or ``csv:path`` (columns theta,value) on the grid."""
    kind, _, body = spec.partition(":")
    theta = TWO_PI * np.arange(N) / N
    if kind == "const":
        try:
            values = np.full(N, float(body))
        except ValueError:
            raise ConfigError(f"{what}: bad constant {body!r}") from None
    elif kind == "trig":
        a0, terms = _trig_terms(body)
        if even_mode and any(k % 2 for k, a, b in terms if a or b):
            raise ConfigError(f"{what}: even_mode requires even harmonics only")
        values = np.full(N, a0)
        for k, a, b in terms:
            values = values + a * np.cos(k * theta) + b * np.sin(k * theta)
    elif kind == "csv":
        with open(body) as fh:
            header = fh.readline().strip().split(",")
        if len(header) != 2 or header[0] != "theta":
            raise ConfigError(f"{what}: {body} must have header theta,<value>")
        table = io.read_table(body, tuple(header))
        values = io.resample_periodic(table["theta"], table[header[1]], N)
    else:
        raise ConfigError(f"{what}: unknown form {kind!r}; use const:, trig: or csv:")
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{what}: non-finite samples")
    return values


def parse_body(spec: str, N: int) -> SupportFn:
    """``disk:R``, ``ellipse:a,b``, ``fourier:a0,k:a:b,...`` or ``csv:path`` (theta,h)."""
    kind, _, body = spec.partition(":")
    try:
        if kind == "disk":
            return disk(float(body), N)
        if kind == "ellipse":
            a, b = (float(x) for x in body.split(","))
            return ellipse(a, b, N)
    except ValueError:
        raise ConfigError(f"bad body specification {spec!r}") from None
    if kind == "fourier":
        a0, terms = _trig_terms(body)
        return fourier([(0, a0, 0.0)] + terms, N)
    if kind == "csv":
        s = io.read_body(body)
        if s.N != N:
            raise ConfigError(f"{body} has {s.N} rows but the grid has N = {N}")
        return s
    raise ConfigError(f"unknown body form {kind!r}; use disk:, ellipse:, fourier: or csv:")


def _grid_size(cfg_N: int, init: str) -> int:
    if init.startswith("csv:"):
        return io.read_body(init[4:]).N
    return cfg_N


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    cfg = build_config(args)
    if args.N is None and cfg.init.startswith("csv:"):
        cfg.N = _grid_size(cfg.N, cfg.init)
    f = parse_function(cfg.f, cfg.N, cfg.even_mode)
    spec = ProblemSpec(cfg.q, cfg.p, f, even_mode=cfg.even_mode)
    initial = parse_body(cfg.init, cfg.N)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    handler.setLevel(logging.DEBUG)
    log.addHandler(handler)
    log.setLevel(logging.DEBUG)
    try:
        log.info("config %s", json.dumps(cfg.__dict__))
        result = run(spec, initial, cfg.flow_options())
    finally:
        log.removeHandler(handler)
        handler.close()
    result.series.to_csv(out / "timeseries.csv")
    io.write_body(out / "final_body.csv", result.state.body.support)
    (out / "summary.json").write_text(io.dumps(result.summary, indent=2) + "\n")
    if cfg.dump_mesh:
        io.write_mesh(out / "mesh", result.state.torsion.mesh)
    print(io.dumps(result.summary))
    return STATUS_EXIT[result.status]


def _parse_arc(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(eval_angle(x)) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"bad arc {text!r}; expected lo,hi") from None
    return lo, hi


def eval_angle(text: str) -> float:
    """Numbers with an optional ``pi`` factor: ``1.5``, ``pi``, ``pi/2``, ``3pi/4``, ``-pi``."""
    t = text.strip().replace(" ", "")
    if "pi" not in t:
        return float(t)
    num, _, den = t.partition("/")
    coef = num.replace("*", "").replace("pi", "")
    scale = {"": 1.0, "+": 1.0, "-": -1.0}[coef] if coef in ("", "+", "-") else float(coef)
    return scale * math.pi / (float(den) if den else 1.0)


def cmd_measure(args) -> int:
    s = io.read_body(args.body)
    body = make_body(s)
    config = SolverConfig(eps_reg=args.eps_reg, tol=args.solver_tol, max_iter=args.solver_max_iter)
    sol = solve_torsion(body, args.q, args.target_size, config)
    dual = dual_measure(body, sol, args.p)
    arcs = args.arc or ["0,pi", "pi,2pi"]
    report = {
        "p": args.p,
        "q": args.q,
        "n": dual.n,
        "total": dual.total,
        "total_x": dual.total_x,
        "gap": dual.gap,
        "arcs": [measure_of_arc(body, dual, *_parse_arc(a)).as_dict() for a in arcs],
    }
    if args.densities:
        io.write_densities(args.densities, body.theta, dual.density_v, dual.density_x)
    if args.dump_mesh:
        io.write_mesh(args.dump_mesh, sol.mesh)
    print(io.dumps(report, indent=2))
    return EXIT_OK


def cmd_variation(args) -> int:
    N = _grid_size(args.N, args.init)
    base = parse_body(args.init, N)
    direction = parse_function(args.direction, N, what="direction")
    family = PerturbationFamily(base, direction, (args.s,), args.mode)
    config = SolverConfig(eps_reg=args.eps_reg, tol=args.solver_tol, max_iter=args.solver_max_iter)
    report = variational_referee(family, args.functional, args.q, args.p, args.target_size, config)
    print(io.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = verify_suite(args.N)
    print(io.dumps(checks, indent=2))
    return EXIT_OK if all(c["pass"] for c in checks) else EXIT_INPUT


# ---------------------------------------------------------------------------
# parser


def _solver_flags(p: argparse.ArgumentParser, defaults: bool) -> None:
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--target-size", dest="target_size", type=float, default=d(0.04), help="mesh edge target")
    p.add_argument("--eps-reg", dest="eps_reg", type=float, default=None, help="gradient regularisation")
    p.add_argument("--solver-tol", dest="solver_tol", type=float, default=d(1e-10))
    p.add_argument("--solver-max-iter", dest="solver_max_iter", type=int, default=d(200))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minkflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate the flow and write artifacts")
    r.add_argument("--config", help="key=value or JSON file; flags override it")
    r.add_argument("--q", type=float)
    r.add_argument("--p", type=float)
    r.add_argument("--f", help="const:c | trig:a0,k:a:b,... | csv:path")
    r.add_argument("--init", help="disk:R | ellipse:a,b | fourier:a0,k:a:b,... | csv:path")
    r.add_argument("--even-mode", dest="even_mode", action="store_const", const=True)
    r.add_argument("--N", type=int)
    r.add_argument("--dt0", type=float)
    r.add_argument("--t-max", dest="t_max", type=float)
    r.add_argument("--tol-residual", dest="tol_residual", type=float)
    _solver_flags(r, defaults=False)
    r.add_argument("--rescale", dest="rescale", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--symmetrize", dest="symmetrize", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--c-guard", dest="c_guard", type=float)
    r.add_argument("--out", help="output directory (MINKFLOW_OUT overrides the config file)")
    r.add_argument("--seed", type=int, help="reserved; runs are deterministic")
    r.add_argument("--dump-mesh", dest="dump_mesh", action="store_const", const=True)
    r.set_defaults(handler=cmd_run)

    m = sub.add_parser("measure", help="dual torsional measure of a body CSV")
    m.add_argument("body", help="CSV with header theta,h")
    m.add_argument("--q", type=float, required=True)
    m.add_argument("--p", type=float, required=True)
    m.add_argument("--arc", action="append", help="lo,hi in radians (pi allowed); repeatable")
    m.add_argument("--densities", help="write angle,density_v,density_x CSV here")
    m.add_argument("--dump-mesh", dest="dump_mesh", help="prefix for mesh vertex/triangle CSVs")
    _solver_flags(m, defaults=True)
    m.set_defaults(handler=cmd_measure)

    v = sub.add_parser("variation", help="finite-difference referee for first variations")
    v.add_argument("--init", required=True, help="disk:R | ellipse:a,b | fourier:... | csv:path")
    v.add_argument("--N", type=int, default=256)
    v.add_argument("--functional", choices=("T", "Q"), required=True)
    v.add_argument("--q", type=float, required=True)
    v.add_argument("--p", type=float)
    v.add_argument("--direction", default="const:1", help="const:c | trig:... | csv:path")
    v.add_argument("--mode", choices=("wulff-log", "radial-log"), default="wulff-log")
    v.add_argument("--s", type=float, default=1e-3)
    _solver_flags(v, defaults=True)
    v.set_defaults(handler=cmd_variation)

    c = sub.add_parser("verify", help="oracle self-consistency suite")
    c.add_argument("--N", type=int, default=256)
    c.set_defaults(handler=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s %(levelname)s %(message)s")
    try:
        return args.handler(args)
    except (MinkflowError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
