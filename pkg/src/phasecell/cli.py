"""Command line front end.

Every subcommand writes its outputs and a ``manifest.json`` into ``--out``
(default: ``$PHASECELL_OUT`` or ``./phasecell-out``). A JSON file given with
``--config`` supplies defaults; explicit flags win. Exit codes: 0 success,
1 task failure, 2 bad arguments.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .cell import CellProblem, estimate_density, solve_cell, solve_cell_delta
from .fields import write_field_binary, write_field_csv
from .geometry import parse_direction
from .homogenize import anisotropy_scan, check_tiling_subadditivity, homogenize_direction
from .integrands import make_integrand
from .potentials import compute_Cu, compute_cp, optimal_profile_1d
from .solver import SolverConfig
from .stochastic import check_covariance, check_subadditivity, check_x_independence, derive_seed, ergodic_estimate
from .verify import run_suite

log = logging.getLogger("phasecell")

ENV_OUT = "PHASECELL_OUT"
CSV_SCHEMAS = {
    "profile1d.csv": ["t", "u"],
    "gamma.csv": ["rho", "eps", "N", "density", "converged", "iterations"],
    "periodic.csv": ["nu_x", "nu_y", "x", "r", "density", "converged"],
    "polar.csv": ["angle_deg", "density"],
    "samples.csv": ["seed", "r", "nu", "density", "iterations", "converged"],
    "field.csv": ["z*", "y*", "u", "clamped"],
}
CSV_SCHEMA_VERSION = 1

CONFIG_KEYS = """\
config keys (JSON): integrand {potential, coefficients, p, c1, c2, variant,
value, values, axis, subdivisions, seed}, solver {max_iters, tol_pg, tol_rel,
rel_window, bb_variant, window, restarts, perturbation}, and any long option
of the subcommand with dashes replaced by underscores (e.g. eps_list)."""


class TaskFailure(RuntimeError):
    pass


# --- helpers ----------------------------------------------------------------


def _floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _direction(text):
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    return parse_direction(text)


def _directions(text):
    if isinstance(text, (list, tuple)):
        return [np.asarray(v, dtype=float) if isinstance(v, (list, tuple)) else parse_direction(str(v)) for v in text]
    return [parse_direction(s) for s in str(text).split(";") if s.strip()]


def _points(text, n=2):
    if isinstance(text, (list, tuple)):
        return [tuple(float(c) for c in v) for v in text]
    return [tuple(float(c) for c in s.split(",")) for s in str(text).split(";") if s.strip()]


class Settings:
    """Merged view of flags over config-file values over built-in defaults."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        self.config = config
        self.resolved = {}

    def get(self, key: str, default=None):
        v = getattr(self.args, key, None)
        if v is None:
            v = self.config.get(key, default)
        self.resolved[key] = v
        return v


def _integrand(s: Settings):
    spec = dict(s.config.get("integrand", {}))
    for key in ("potential", "p", "c1", "c2", "variant", "value", "axis", "subdivisions"):
        v = getattr(s.args, key, None)
        if v is not None:
            spec[key] = v
    if getattr(s.args, "values", None) is not None:
        spec["values"] = _floats(s.args.values)
    if getattr(s.args, "coefficients", None) is not None:
        spec["coefficients"] = _floats(s.args.coefficients)
    if "coefficients" in spec:
        pot = spec.get("potential", "quartic")
        if isinstance(pot, str):
            spec["potential"] = {"kind": pot, "coefficients": spec.pop("coefficients")}
    if spec.get("variant") in ("random", "random-checkerboard") and "seed" not in spec:
        spec["seed"] = s.get("seed", 0)
    I = make_integrand(spec)
    s.resolved["integrand"] = I.to_dict()
    if "seed" in spec:
        s.resolved["integrand"]["seed"] = spec["seed"]
    return I


def _solver(s: Settings) -> SolverConfig:
    d = dict(s.config.get("solver", {}))
    for key in ("max_iters", "tol_pg", "tol_rel", "restarts"):
        v = getattr(s.args, key, None)
        if v is not None:
            d[key] = v
    cfg = SolverConfig(**d)
    s.resolved["solver"] = cfg.to_dict()
    return cfg


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def write_manifest(out: Path, command: str, settings: Settings, seed, timings: dict, outputs: list) -> Path:
    files = []
    for name in outputs:
        p = out / name
        entry = {"path": name, "sha256": _sha256(p), "bytes": p.stat().st_size}
        if name in CSV_SCHEMAS:
            entry["schema"] = CSV_SCHEMAS[name]
            entry["schema_version"] = CSV_SCHEMA_VERSION
        files.append(entry)
    manifest = {
        "tool": "phasecell",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "argv": settings.args.argv,
        "seed": seed,
        "config": settings.resolved,
        "timings": timings,
        "outputs": files,
    }
    path = out / "manifest.json"
    _write_json(path, manifest)
    return path


# --- subcommands ------------------------------------------------------------


def cmd_cp(s: Settings, out: Path):
    I = _integrand(s)
    qp = int(s.get("quad_points", 256))
    cp = compute_cp(I.W, I.p, qp)
    Cu = compute_Cu(I.W, p=I.p)
    print(repr(cp))
    _write_json(out / "cp.json", {"cp": cp, "Cu": Cu, "p": I.p, "quad_points": qp})
    return ["cp.json"], True


def cmd_profile1d(s: Settings, out: Path):
    I = _integrand(s)
    res = optimal_profile_1d(I.W, I.p, int(s.get("grid", 512)), float(s.get("half_width", 5.0)), _solver_or_none(s))
    np.savetxt(out / "profile1d.csv", np.column_stack([res.t, res.values]), delimiter=",", header="t,u", comments="", fmt="%.17g")
    cp = compute_cp(I.W, I.p)
    summary = {"cost": res.cost, "cp": cp, "iterations": res.iterations, "converged": res.converged, "pg_norm": res.pg_norm}
    _write_json(out / "profile1d.json", summary)
    print(json.dumps(summary, default=_json_default))
    return ["profile1d.csv", "profile1d.json"], res.converged


def _solver_or_none(s: Settings):
    if s.config.get("solver") or any(getattr(s.args, k, None) is not None for k in ("max_iters", "tol_pg", "tol_rel", "restarts")):
        return _solver(s)
    return None


def _cell_problem(s: Settings) -> CellProblem:
    I = _integrand(s)
    cfg = _solver(s)
    nu = _direction(s.get("nu", "0,1"))
    eps = float(s.get("eps", 1.0 / 16))
    x = s.get("x")
    x = tuple(_floats(x)) if x is not None else (0.0,) * nu.size
    if s.get("oscillate", False):
        I = I.oscillating(eps)
    return CellProblem(I, x, tuple(nu), float(s.get("rho", 1.0)), eps, int(s.get("N", 64)), s.get("delta_bc"), cfg, int(s.get("seed", 0)))


def cmd_cell(s: Settings, out: Path):
    P = _cell_problem(s)
    delta = s.get("delta")
    r = solve_cell_delta(P, float(delta)) if delta is not None else solve_cell(P)
    summary = r.summary()
    summary["problem"] = P.to_dict()
    _write_json(out / "cell.json", summary)
    print(json.dumps({k: summary[k] for k in ("m_hat", "density", "converged", "iterations")}, default=_json_default))
    return ["cell.json"], r.outcome.converged


def cmd_export_field(s: Settings, out: Path):
    P = _cell_problem(s)
    r = solve_cell(P)
    fmt = s.get("format", "csv")
    if fmt == "csv":
        name = "field.csv"
        write_field_csv(r.outcome.field, out / name)
    else:
        name = "field.bin"
        write_field_binary(r.outcome.field, out / name, P.eps)
    _write_json(out / "cell.json", r.summary())
    return [name, "cell.json"], r.outcome.converged


def cmd_gamma(s: Settings, out: Path):
    I = _integrand(s)
    cfg = _solver(s)
    nu = _direction(s.get("nu", "0,1"))
    x = s.get("x")
    x = tuple(_floats(x)) if x is not None else (0.0,) * nu.size
    est = estimate_density(
        I,
        x,
        tuple(nu),
        _floats(s.get("rho_list", "0.5,0.75,1.0")),
        _floats(s.get("eps_list", "0.125,0.0625")),
        float(s.get("h", 1.0 / 64)),
        cfg,
        oscillate=bool(s.get("oscillate", False)),
        richardson=bool(s.get("richardson", False)),
        jobs=int(s.get("jobs", 1)),
    )
    est.write_csv(out / "gamma.csv")
    summary = est.summary()
    summary["monotonicity"] = est.monotonicity
    _write_json(out / "gamma.json", summary)
    print(json.dumps({"f_prime_est": est.f_prime_est, "f_dprime_est": est.f_dprime_est, "monotone": est.monotone}))
    return ["gamma.csv", "gamma.json"], est.monotone


def cmd_periodic(s: Settings, out: Path):
    I = _integrand(s)
    cfg = _solver(s)
    res = int(s.get("resolution", 16))
    jobs = int(s.get("jobs", 1))
    outputs = []
    ok = True
    tiling = s.get("tiling")
    nu_list = s.get("nu_list")
    if tiling is not None:
        r, sz = _ints(tiling)
        nu = _direction(s.get("nu", "0,1"))
        rep = check_tiling_subadditivity(I, nu, r, sz, res, cfg)
        _write_json(out / "tiling.json", rep.summary())
        print(json.dumps(rep.summary(), default=_json_default))
        return ["tiling.json"], rep.holds
    if nu_list is not None:
        table = anisotropy_scan(I, _directions(nu_list), float(s.get("r", 8)), res, cfg, jobs)
        table.write_csv(out / "periodic.csv")
        outputs.append("periodic.csv")
        if s.get("polar", False):
            table.write_csv(out / "polar.csv", polar=True)
            outputs.append("polar.csv")
        summary = {"r": table.r, "ratio": table.ratio, "densities": table.densities, "directions": table.directions}
    else:
        nu = _direction(s.get("nu", "0,1"))
        run = homogenize_direction(I, nu, _points(s.get("x_list", "0,0")), _floats(s.get("r_list", "2,4,8")), res, cfg, jobs)
        run.write_csv(out / "periodic.csv")
        outputs.append("periodic.csv")
        summary = run.summary()
        ok = run.bracket_ok
    _write_json(out / "periodic.json", summary)
    outputs.append("periodic.json")
    print(json.dumps(summary, default=_json_default))
    return outputs, ok


def cmd_stochastic(s: Settings, out: Path):
    cfg = _solver(s)
    seed = int(s.get("seed", 0))
    values = tuple(_floats(s.get("values", "0.5,2.0")))
    res = int(s.get("resolution", 8))
    nu = _direction(s.get("nu", "0,1"))
    mode = s.get("mode", "ergodic")
    if mode == "ergodic":
        est = ergodic_estimate(nu, _floats(s.get("r_list", "4,8,16")), int(s.get("seeds", 16)), cfg, seed, values, res, int(s.get("jobs", 1)))
        est.write_csv(out / "samples.csv")
        summary = est.summary()
        _write_json(out / "summary.json", summary)
        print(json.dumps(summary, default=_json_default))
        return ["samples.csv", "summary.json"], True
    if mode == "covariance":
        a, b = _ints(s.get("interval", "0,1"))
        zp = _ints(s.get("shift", "1"))
        rep = check_covariance(derive_seed(seed, 0), a, b, zp, nu, cfg, res)
        summary = {"left": rep.left, "right": rep.right, "deviation": rep.deviation, "ok": rep.ok}
    elif mode == "subadditivity":
        a, b = _ints(s.get("interval", "0,2"))
        cuts = _ints(s.get("cuts", "1"))
        edges = [a] + cuts + [b]
        parts = list(zip(edges[:-1], edges[1:]))
        rep = check_subadditivity(derive_seed(seed, 0), a, b, parts, nu, cfg, res)
        summary = rep.summary()
    elif mode == "x-independence":
        rep = check_x_independence(derive_seed(seed, 0), nu, _points(s.get("x_list", "0,0;0.3,0.7")), float(s.get("r", 16)), cfg, values, res, int(s.get("jobs", 1)))
        summary = {"densities": rep.densities, "spread": rep.spread, "flagged": rep.flagged}
        ok = not rep.flagged
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if mode != "x-independence":
        ok = rep.ok
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary, default=_json_default))
    return ["summary.json"], bool(ok)


def cmd_verify(s: Settings, out: Path):
    level = s.get("level", "fast")
    seed = int(s.get("seed", 0))
    report = run_suite(level, seed)
    text = report.to_json()
    (out / "verify.json").write_text(text + "\n")
    print(text)
    s.resolved["check_timings"] = report.timings()
    return ["verify.json"], report.passed


COMMANDS = {
    "cp": cmd_cp,
    "profile1d": cmd_profile1d,
    "cell": cmd_cell,
    "gamma": cmd_gamma,
    "periodic": cmd_periodic,
    "stochastic": cmd_stochastic,
    "verify": cmd_verify,
    "export-field": cmd_export_field,
}


# --- parser -----------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./phasecell-out)")
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, help="worker processes for independent solves (default 1)")
    p.add_argument("--log-level", default="WARNING")


def _add_integrand(p: argparse.ArgumentParser):
    p.add_argument("--potential", choices=["quartic", "quadratic-wells", "custom-polynomial"], help="double well (default quartic)")
    p.add_argument("--coefficients", help="potential coefficients, comma separated")
    p.add_argument("--p", type=float, help="growth exponent p > 1 (default 2)")
    p.add_argument("--c1", type=float)
    p.add_argument("--c2", type=float)
    p.add_argument("--variant", choices=["homogeneous", "constant", "laminate", "checkerboard", "random"], help="coefficient family (default homogeneous)")
    p.add_argument("--value", type=float, help="constant coefficient value")
    p.add_argument("--values", help="coefficient values, comma separated")
    p.add_argument("--axis", type=int, help="laminate variation axis")
    p.add_argument("--subdivisions", type=int, help="checkerboard sub-cells per axis")


def _add_solver(p: argparse.ArgumentParser):
    p.add_argument("--max-iters", type=int, help="solver iteration cap (default 20000)")
    p.add_argument("--tol-pg", type=float, help="projected-gradient tolerance (default 1e-6)")
    p.add_argument("--tol-rel", type=float, help="relative decrease over 20 iterations (default 1e-9)")
    p.add_argument("--restarts", type=int, help="multi-start count (default 1)")


def _add_cell(p: argparse.ArgumentParser):
    p.add_argument("--nu", help='direction "p,q" or "30deg" (default 0,1)')
    p.add_argument("--x", help="cube centre, comma separated")
    p.add_argument("--rho", type=float, help="cube side (default 1)")
    p.add_argument("--eps", type=float, help="transition scale (default 1/16)")
    p.add_argument("--N", type=int, help="cells per axis (default 64)")
    p.add_argument("--delta-bc", type=float, help="clamp band width (default 2h)")
    p.add_argument("--oscillate", action="store_true", default=None, help="use f(x/eps) instead of f(x)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phasecell", description=__doc__.splitlines()[0], epilog=CONFIG_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"phasecell {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cp", help="1D transition constant c_p", epilog=CONFIG_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    _add_integrand(p)
    p.add_argument("--quad-points", type=int, help="quadrature nodes (default 256)")

    p = sub.add_parser("profile1d", help="discrete optimal 1D profile", epilog=CONFIG_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    _add_integrand(p)
    _add_solver(p)
    p.add_argument("--grid", type=int, help="cells (default 512)")
    p.add_argument("--half-width", type=float, help="domain half width T (default 5)")

    p = sub.add_parser("cell", help="one cell problem", epilog=CONFIG_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    _add_integrand(p)
    _add_solver(p)
    _add_cell(p)
    p.add_argument("--delta", type=float, help="solve m^delta with this band instead")

    p = sub.add_parser("export-field", help="solve a cell problem and dump the field", epilog=CONFIG_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    _add_integrand(p)
    _add_solver(p)
    _add_cell(p)
    p.add_argument("--format", choices=["csv", "binary"], help="default csv")

    p = sub.add_parser("gamma", help="(rho, eps) sweep for the surface density", epilog=CONFIG_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    _add_integrand(p)
    _add_solver(p)
    p.add_argument("--nu")
    p.add_argument("--x")
    p.add_argument("--rho-list", help="default 0.5,0.75,1.0")
    p.add_argument("--eps-list", help="default 0.125,0.0625")
    p.add_argument("--h", type=float, help="grid spacing shared by all cubes (default 1/64)")
    p.add_argument("--oscillate", action="store_true", default=None)
    p.add_argument("--richardson", action="store_true", default=None, help="also report a first-order extrapolation in eps")

    p = sub.add_parser("periodic", help="periodic homogenisation sweeps", epilog=CONFIG_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    _add_integrand(p)
    _add_solver(p)
    p.add_argument("--nu")
    p.add_argument("--nu-list", help='directions separated by ";" for an anisotropy scan')
    p.add_argument("--x-list", help='points "x,y;x,y" (default 0,0)')
    p.add_argument("--r-list", help="increasing sides (default 2,4,8)")
    p.add_argument("--r", type=float, help="side for --nu-list scans (default 8)")
    p.add_argument("--resolution", type=int, help="cells per unit period (default 16)")
    p.add_argument("--polar", action="store_true", default=None, help="also write (angle, density) pairs")
    p.add_argument("--tiling", help='"r,s": check the tiling bound instead')

    p = sub.add_parser("stochastic", help="random checkerboard experiments", epilog=CONFIG_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    _add_solver(p)
    p.add_argument("--mode", choices=["ergodic", "covariance", "subadditivity", "x-independence"], help="default ergodic")
    p.add_argument("--nu")
    p.add_argument("--values", help="checkerboard values (default 0.5,2.0)")
    p.add_argument("--r-list", help="default 4,8,16")
    p.add_argument("--r", type=float, help="side for x-independence (default 16)")
    p.add_argument("--seeds", type=int, help="number of realisations (default 16)")
    p.add_argument("--resolution", type=int, help="cells per unit (default 8)")
    p.add_argument("--interval", help='"a,b" for covariance/subadditivity')
    p.add_argument("--shift", help="integer shift z' for covariance")
    p.add_argument("--cuts", help="interior cut points of the partition")
    p.add_argument("--x-list")

    p = sub.add_parser("verify", help="run the invariant suite", epilog=CONFIG_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    p.add_argument("--level", choices=["fast", "full"], help="default fast")
    return parser


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("configuration must be a JSON object")
    return cfg


def cli_main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    s = Settings(args, config)
    out = Path(s.get("out") or os.environ.get(ENV_OUT) or "phasecell-out")
    seed = s.get("seed", 0)
    jobs = s.get("jobs", 1)
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs, ok = COMMANDS[args.command](s, out)
    except (ValueError, TypeError, KeyError) as exc:
        # invalid parameters surface as these before any heavy work starts
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # task failure
        log.exception("task failed")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    timings = {"total": time.perf_counter() - t0}
    timings.update(s.resolved.pop("check_timings", {}))
    s.resolved["out"] = str(out)
    s.resolved["jobs"] = jobs
    write_manifest(out, args.command, s, seed, timings, outputs)
    return 0 if ok else 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
