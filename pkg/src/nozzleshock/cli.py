"""Command-line driver: locate shock anchors, solve the linear and nonlinear
problems per anchor and write manifests plus CSV grids.

Configuration is a TOML file; any key can be overridden through environment
variables named NOZZLESHOCK_<SECTION>__<KEY> (double underscore separates
nesting levels), e.g. ``NOZZLESHOCK_NOZZLE__SIGMA=0.005``.

Exit codes: 0 success, 2 configuration error, 3 P* outside the range of R,
4 no convergence (non-contraction, marching failure), 5 solvability failure.
"""

import argparse
import copy
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .errors import (
    BallViolationError,
    CFLError,
    CompatibilityError,
    ConfigError,
    GeometryError,
    LagrangeInversionError,
    MarchingError,
    NonContractionError,
    NozzleShockError,
    SolvabilityError,
    SolvabilityRootError,
)
from .fields import write_columns_csv, write_fields_csv
from .gas_core import BackgroundShock, FlowState, GasConstants
from .linear_fbp import solve_linear_fbp, solve_linear_supersonic, wave_speed
from .nozzle import NozzleSpec, Profile1D, lagrange_to_physical
from .shock_locator import find_admissible_locations
from .supersonic import solve_supersonic_nonlinear
from .transonic_iteration import IterationOptions, solve_transonic

log = logging.getLogger("nozzleshock")

ENV_PREFIX = "NOZZLESHOCK_"
MODES = ("locate-only", "linear-only", "full")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OUT_OF_RANGE = 3
EXIT_NONCONTRACTION = 4
EXIT_SOLVABILITY = 5

DEFAULTS = {
    "mode": "full",
    "threads": 1,
    "seed_grid": 4096,
    "gas": {"gamma": 1.4, "c_v": 1.0, "s0": 0.0},
    "upstream": {"p": 1.0, "mach": 2.0},
    "nozzle": {"length": 1.0, "sigma": 0.01, "theta": "x^3", "normalize_theta": False, "compat_policy": "error"},
    "exit_pressure": {"expression": "0"},
    "grids": {"n_xi": 257, "n_eta": 129, "order": 2},
    "tolerances": {"root_tol": 1e-12, "compat_tol": 1e-8, "iter_tol": 1e-10, "final_tol": 1e-8},
    "iteration": {"max_iters": 50, "beta": 4.0, "ball": "warn", "bracket_width": 10.0, "sigma_max": 0.05},
}


@dataclass
class RunConfig:
    gas: GasConstants
    background: BackgroundShock
    nozzle: NozzleSpec
    grids: dict
    tolerances: dict
    iteration: dict
    mode: str = "full"
    threads: int = 1
    seed_grid: int = 4096
    raw: dict = field(default_factory=dict)

    def options(self) -> IterationOptions:
        it, tol, gr = self.iteration, self.tolerances, self.grids
        return IterationOptions(
            iter_tol=tol["iter_tol"],
            final_tol=tol["final_tol"],
            compat_tol=tol["compat_tol"],
            max_iters=int(it["max_iters"]),
            beta=float(it["beta"]),
            ball=it["ball"],
            bracket_width=float(it["bracket_width"]),
            sigma_max=float(it["sigma_max"]),
            n_xi=int(gr["n_xi"]),
            n_eta=int(gr["n_eta"]),
            n1=gr.get("n1"),
            order=int(gr["order"]),
            compat_policy=self.raw["nozzle"]["compat_policy"],
        )


# -- configuration ---------------------------------------------------------------


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_env_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def env_overrides(environ=None):
    """Nested dict of overrides from NOZZLESHOCK_* variables."""
    environ = os.environ if environ is None else environ
    out = {}
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in name[len(ENV_PREFIX):].split("__") if p]
        if not path:
            continue
        node = out
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment override {name} conflicts with a scalar key")
        node[path[-1]] = _parse_env_value(environ[name])
    return out


def load_config(path=None, environ=None, overrides=None):
    """Defaults, then the TOML file, then environment variables, then explicit overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                cfg = _merge(cfg, tomllib.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        base = Path(path).resolve().parent
        cfg["_base_dir"] = str(base)
    cfg = _merge(cfg, env_overrides(environ))
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def _profile(section, length, what, base_dir):
    """Profile from {'expression': ...} or {'csv': ...} (or a bare string expression)."""
    if isinstance(section, (int, float)):
        section = {"expression": repr(float(section))}
    if isinstance(section, str):
        section = {"expression": section}
    if not isinstance(section, dict):
        raise ConfigError(f"{what}: expected an expression or a table")
    try:
        if "csv" in section:
            path = Path(section["csv"])
            if not path.is_absolute() and base_dir:
                path = Path(base_dir) / path
            return Profile1D.from_csv(path)
        if "expression" in section:
            prof = Profile1D.from_expression(str(section["expression"]), 0.0, length, constants={"L": length})
            prof(np.linspace(0.0, length, 5))  # evaluate once so bad names fail here
            return prof
    except (ValueError, OSError, NozzleShockError) as exc:
        raise ConfigError(f"{what}: {exc}") from exc
    raise ConfigError(f"{what}: needs 'expression' or 'csv'")


def build_run_config(cfg: dict) -> RunConfig:
    """Validate a merged config dict; raises ConfigError on any problem."""
    try:
        mode = cfg["mode"]
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        threads = int(cfg["threads"])
        seed_grid = int(cfg["seed_grid"])
        if threads < 1 or seed_grid < 16:
            raise ConfigError("threads must be >= 1 and seed_grid >= 16")
        gas = GasConstants(**{k: float(v) for k, v in cfg["gas"].items()})
        up = cfg["upstream"]
        if {"theta", "q", "s"} <= set(up):
            state = FlowState(float(up["p"]), float(up["theta"]), float(up["q"]), float(up["s"]))
            bg = BackgroundShock.from_state(state, gas)
        else:
            bg = BackgroundShock.from_upstream(float(up["p"]), float(up["mach"]), gas)
        nz = cfg["nozzle"]
        length = float(nz["length"])
        base = cfg.get("_base_dir")
        theta_src = {"csv": nz["theta_csv"]} if "theta_csv" in nz else nz["theta"]
        theta = _profile(theta_src, length, "nozzle.theta", base)
        pressure = _profile(cfg["exit_pressure"], 1.0, "exit_pressure", base)
        if nz.get("compat_policy") not in ("error", "warn"):
            raise ConfigError("nozzle.compat_policy must be 'error' or 'warn'")
        spec = NozzleSpec(length, float(nz["sigma"]), theta, pressure, bool(nz.get("normalize_theta", False)))
        tol = {k: float(v) for k, v in cfg["tolerances"].items()}
        for k in ("root_tol", "compat_tol", "iter_tol", "final_tol"):
            if not tol.get(k, 0.0) > 0.0:
                raise ConfigError(f"tolerances.{k} must be positive")
        grids = dict(cfg["grids"])
        if int(grids["n_xi"]) < 9 or int(grids["n_eta"]) < 9:
            raise ConfigError("grids need at least 9 nodes per direction")
        rc = RunConfig(gas, bg, spec, grids, tol, dict(cfg["iteration"]), mode, threads, seed_grid, cfg)
        rc.options()  # validates iteration settings
        return rc
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, NozzleShockError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def echo_config(cfg: dict) -> dict:
    """Config as echoed into manifests (internal keys dropped)."""
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


# -- validation ------------------------------------------------------------------


def validate(cfg: dict) -> dict:
    """Dry-run report; never raises."""
    report = {"ok": True, "checks": []}

    def add(name, ok, message, **extra):
        report["checks"].append({"check": name, "ok": bool(ok), "message": message, **extra})
        report["ok"] = report["ok"] and bool(ok)

    up = cfg.get("upstream", {})
    mach = up.get("mach")
    if mach is not None:
        try:
            mach = float(mach)
            add("upstream_supersonic", mach > 1.0,
                "upstream flow is supersonic" if mach > 1.0 else f"upstream not supersonic (M = {mach})")
        except (TypeError, ValueError):
            add("upstream_supersonic", False, f"upstream Mach {mach!r} is not a number")
    try:
        rc = build_run_config(cfg)
    except ConfigError as exc:
        add("config", False, str(exc))
        return report
    add("config", True, "configuration parsed")
    spec, bg = rc.nozzle, rc.background
    rep = find_admissible_locations(spec, bg, rc.seed_grid, root_tol=rc.tolerances["root_tol"])
    n = len(rep.admissible_roots)
    if not rep.in_range:
        verdict = "no admissible location"
    else:
        verdict = f"{n} admissible location{'s' if n != 1 else ''} expected"
    add("range", rep.in_range, verdict, p_star=rep.p_star, r_lower=rep.r_lower, r_upper=rep.r_upper,
        roots=[r.xi_star for r in rep.roots])
    defect = spec.compatibility_defect()
    ok = spec.sigma == 0 or defect < 1e-6
    add("inlet_compatibility", ok, f"wall-angle defect at the inlet corner {defect:.3e}", defect=defect)
    n_xi, n_eta = int(rc.grids["n_xi"]), int(rc.grids["n_eta"])
    nu = wave_speed(bg) * (spec.length / (n_xi - 1)) / (1.0 / (n_eta - 1))
    substeps = max(1, math.ceil(nu / 0.9))
    add("cfl", True, f"column Courant number {nu:.3f}; {substeps} substep(s) per column", courant=nu, substeps=substeps)
    report["verdict"] = verdict
    return report


# -- run -------------------------------------------------------------------------


def _dump(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _exit_code(exc):
    if isinstance(exc, (SolvabilityError, SolvabilityRootError)):
        return EXIT_SOLVABILITY
    if isinstance(exc, (NonContractionError, BallViolationError, MarchingError, CFLError, LagrangeInversionError,
                        GeometryError)):
        return EXIT_NONCONTRACTION
    if isinstance(exc, (ConfigError, CompatibilityError)):
        return EXIT_CONFIG
    return EXIT_NONCONTRACTION


def _diagnostic(exc, **context):
    d = {"error": type(exc).__name__, "message": str(exc), "exit_code": _exit_code(exc)}
    for attr in ("residual", "tol", "samples", "log"):
        if hasattr(exc, attr):
            d[attr] = getattr(exc, attr)
    d.update(context)
    return d


def _write_linear(out, sol, cfg_echo):
    out.mkdir(parents=True, exist_ok=True)
    write_fields_csv(out / "minus.csv", sol.minus)
    write_fields_csv(out / "plus.csv", sol.plus)
    write_columns_csv(out / "shock.csv", {"eta": sol.eta, "psi": sol.psi, "psi_prime": sol.psi_prime})
    manifest = {
        "xi_bar": sol.xi_star,
        "grid": {"minus": list(sol.minus.p.shape), "plus": list(sol.plus.p.shape)},
        "norms": {"minus_sup": sol.minus.sup_norm(), "plus_sup": sol.plus.sup_norm(),
                  "psi_prime_sup": float(np.max(np.abs(sol.psi_prime)))},
        "compatibility": sol.compat,
        "config": cfg_echo,
    }
    _dump(out / "manifest.json", manifest)


def _write_nonlinear(out, sol, cfg_echo):
    out.mkdir(parents=True, exist_ok=True)
    phys = lagrange_to_physical(sol)
    write_fields_csv(out / "plus.csv", sol.plus, {"x": phys.subsonic_x, "y": phys.subsonic_y})
    write_columns_csv(out / "shock.csv", {"eta": sol.eta, "psi": sol.psi, "psi_prime": sol.psi_prime,
                                          "x": phys.x, "y": phys.y})
    manifest = sol.to_manifest()
    manifest.update(wall_x=phys.wall_x, wall_y=phys.wall_y, anchor_offset=phys.anchor_offset, config=cfg_echo)
    _dump(out / "manifest.json", manifest)
    return phys


def run(cfg: dict, out_dir) -> int:
    """Execute the configured pipeline; returns the process exit code."""
    try:
        rc = build_run_config(cfg)
    except ConfigError as exc:
        print(json.dumps(_diagnostic(exc), sort_keys=True), file=sys.stderr)
        return EXIT_CONFIG
    spec, bg = rc.nozzle, rc.background
    cfg_echo = echo_config(cfg)
    options = rc.options()
    if rc.mode != "locate-only" and spec.sigma > 0:
        try:
            spec.check_compatibility(options.compat_policy)
        except CompatibilityError as exc:
            print(json.dumps(_diagnostic(exc), sort_keys=True), file=sys.stderr)
            return EXIT_CONFIG
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rep = find_admissible_locations(spec, bg, rc.seed_grid, root_tol=rc.tolerances["root_tol"])
    loc = rep.to_dict()
    loc["config"] = cfg_echo
    _dump(out / "locations.json", loc)
    summary = {"mode": rc.mode, "p_star": rep.p_star, "r_range": [rep.r_lower, rep.r_upper], "status": rep.status,
               "roots": [], "config": cfg_echo}
    if not rep.in_range:
        diag = {"error": "OutOfRange", "message": rep.notes[0] if rep.notes else "P* outside range",
                "exit_code": EXIT_OUT_OF_RANGE, "p_star": rep.p_star, "r_lower": rep.r_lower, "r_upper": rep.r_upper}
        _dump(out / "diagnostics.json", {"failures": [diag]})
        summary["solutions"] = 0
        _dump(out / "summary.json", summary)
        return EXIT_OUT_OF_RANGE
    roots = rep.admissible_roots
    if rc.mode == "locate-only":
        summary["solutions"] = len(roots)
        summary["roots"] = [{"index": j, "xi_bar": r.xi_star} for j, r in enumerate(roots)]
        _dump(out / "summary.json", summary)
        return EXIT_OK

    n_xi, n_eta = int(rc.grids["n_xi"]), int(rc.grids["n_eta"])
    sup_lin = solve_linear_supersonic(spec, bg, n_xi, n_eta)
    failures = []
    sup = None
    if rc.mode == "full":
        try:
            sup = solve_supersonic_nonlinear(spec, bg, n_xi, n_eta, order=options.order,
                                             compat_policy=options.compat_policy)
            (out / "supersonic").mkdir(exist_ok=True)
            write_fields_csv(out / "supersonic" / "fields.csv", sup)
        except NozzleShockError as exc:
            failures.append(_diagnostic(exc, stage="supersonic"))

    def solve_root(j, root):
        entry = {"index": j, "xi_bar": root.xi_star}
        rdir = out / f"root_{j}"
        try:
            lin = solve_linear_fbp(root.xi_star, spec, bg, n_xi, n_eta, rc.grids.get("n1"), sup=sup_lin)
            _write_linear(rdir / "linear", lin, cfg_echo)
            entry["linear"] = {"psi_1": float(lin.psi[-1]), "compat": lin.compat}
            if rc.mode == "full" and sup is not None:
                sol = solve_transonic(spec, bg, root.xi_star, options, supersonic=sup, linear=lin)
                phys = _write_nonlinear(rdir / "nonlinear", sol, cfg_echo)
                entry.update(converged=sol.converged, iterations=sol.iterations, xi_star=sol.xi_star,
                             anchor_offset=phys.anchor_offset, residuals=sol.residuals)
        except NozzleShockError as exc:
            return entry, _diagnostic(exc, root=j, xi_bar=root.xi_star)
        return entry, None

    with ThreadPoolExecutor(max_workers=rc.threads) as pool:
        results = list(pool.map(lambda a: solve_root(*a), enumerate(roots)))
    for entry, diag in results:
        summary["roots"].append(entry)
        if diag is not None:
            failures.append(diag)
    if rc.mode == "full":
        summary["solutions"] = sum(1 for e in summary["roots"] if e.get("converged"))
        summary["non_uniqueness_count"] = summary["solutions"]
    else:
        summary["solutions"] = sum(1 for e in summary["roots"] if "linear" in e)
    _dump(out / "summary.json", summary)
    if failures:
        _dump(out / "diagnostics.json", {"failures": failures})
        return failures[0]["exit_code"]
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="nozzleshock", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--out", default="nozzleshock_out", help="output directory")
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--seed-grid", type=int, help="scan cells for the anchor search")
    parser.add_argument("--validate", action="store_true", help="dry-run checks only")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in (("mode", args.mode), ("threads", args.threads), ("seed_grid", args.seed_grid))
                 if v is not None}
    try:
        cfg = load_config(args.config, overrides=overrides)
    except ConfigError as exc:
        print(json.dumps(_diagnostic(exc), sort_keys=True), file=sys.stderr)
        return EXIT_CONFIG
    if args.validate:
        report = validate(cfg)
        print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
        return EXIT_OK
    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
