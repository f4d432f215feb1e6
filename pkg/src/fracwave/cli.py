"""Command-line experiment runner.

Experiments are described by strict JSON configs (unknown keys rejected, all
defaults materialized and echoed next to the results) and produce CSV tables
plus a manifest carrying the config digest, tool version, master seed and
the list of every file written.  Exit codes: 0 success, 2 validation error,
3 numerical failure, 4 failed --check / self-test.
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime
import hashlib
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from . import __version__, acceptance, estimators, lattice, model, noise, quadrature, solver
from .errors import BlowUpError, ConfigError, ConvergenceError, DomainError

ENV_SEED = "FRACWAVE_SEED"

EXPERIMENT_KINDS = (
    "check", "exponents", "isometry", "scaling", "frontier", "simulate",
    "validate-noise",
)

_REQUIRED = object()

_COEFF_SCHEMA = {"type": "zero", "lambda": 0.0, "offset": 0.0, "name": ""}

_SCHEMA: Dict[str, Dict[str, Any]] = {
    "model": {"k": _REQUIRED, "d": _REQUIRED, "T": 1.0},
    "measure": {"type": _REQUIRED, "beta": None, "constant": None,
                "level": None, "atoms": None},
    "grid": {"L": 8.0, "N": 256},
    "solver": {"dt": None, "alpha": 0.0, "seed": 12345,
               "sigma": dict(_COEFF_SCHEMA), "b": dict(_COEFF_SCHEMA),
               "forced_z": None, "v0": "zero", "v0_tilde": "zero",
               "dealias": False},
    "quadrature": {"rel_tol": 1e-8, "abs_tol": 1e-12,
                   "truncation_radius": 4096.0, "max_subdivisions": 1000000},
    "experiment": {"kind": _REQUIRED},
}

_KIND_SCHEMA: Dict[str, Dict[str, Any]] = {
    "check": {"alpha": _REQUIRED, "eta": None, "method": "auto"},
    "exponents": {"alpha": _REQUIRED, "eta": _REQUIRED, "delta": 1.0,
                  "gamma_ic": 0.0, "q": "inf"},
    "isometry": {"alpha": _REQUIRED, "reversed": True, "mc_paths": 0,
                 "mc_tolerance": 0.05, "workers": 0},
    "scaling": {"method": "quadrature", "t1": _REQUIRED, "lags": _REQUIRED,
                "alpha": _REQUIRED, "q": 2.0, "n_paths": 500,
                "tolerance": 0.05, "workers": 0},
    "frontier": {"t": _REQUIRED, "alpha_grid": _REQUIRED, "n_paths": 128,
                 "grid_sizes": [256, 512, 1024], "expected": None, "workers": 0},
    "simulate": {"snapshot_times": None, "store_fields": False},
    "validate-noise": {"n_samples": 10000, "dt": 1.0},
}


# ---------------------------------------------------------------------------
# Config validation
# ---------------------------------------------------------------------------

def _apply_section(name: str, schema: Dict[str, Any], given: Dict[str, Any]) -> Dict[str, Any]:
    if not isinstance(given, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(given) - set(schema)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    out = {}
    for key, default in schema.items():
        if key in given:
            value = given[key]
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {name}.{key}")
        else:
            value = copy.deepcopy(default)
        if isinstance(default, dict) and value is not None:
            value = _apply_section(f"{name}.{key}", default, value)
        out[key] = value
    return out


def validate_config(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Strict-schema validation; returns the effective config with all
    defaults materialized."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown top-level sections: {sorted(unknown)}")
    out = {}
    for section, schema in _SCHEMA.items():
        if section == "experiment":
            continue
        out[section] = _apply_section(section, schema, raw.get(section, {}))
    exp_raw = raw.get("experiment")
    if exp_raw is None:
        raise ConfigError("missing required section 'experiment'")
    if not isinstance(exp_raw, dict) or "kind" not in exp_raw:
        raise ConfigError("experiment.kind is required")
    kind = exp_raw["kind"]
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"experiment.kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    kind_schema = dict(_KIND_SCHEMA[kind])
    kind_schema["kind"] = kind
    out["experiment"] = _apply_section("experiment", kind_schema,
                                       exp_raw)
    return out


def apply_overrides(config: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """Apply --set key.path=value pairs (values parsed as JSON when possible)."""
    out = copy.deepcopy(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, _, raw_value = item.partition("=")
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        node = out
        parts = path.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = node.get(part) if isinstance(node.get(part), dict) else {}
            node = node[part]
        node[parts[-1]] = value
    return out


def config_digest(config: Dict[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Config -> objects
# ---------------------------------------------------------------------------

def build_measure(cfg: Dict[str, Any], d: int) -> model.SpectralMeasure:
    mtype = cfg["type"]
    if mtype == "riesz":
        if cfg["beta"] is None:
            raise ConfigError("measure.beta is required for type 'riesz'")
        return model.riesz_measure(float(cfg["beta"]), d, cfg["constant"])
    if mtype == "flat":
        level = 1.0 if cfg["level"] is None else float(cfg["level"])
        return model.FlatDensity(level=level, d=d)
    if mtype == "atoms":
        if not cfg["atoms"]:
            raise ConfigError("measure.atoms is required for type 'atoms'")
        return model.FiniteAtoms.of(
            [(tuple(a["location"]), float(a["mass"])) for a in cfg["atoms"]], d=d)
    raise ConfigError(f"unknown measure type {mtype!r} (riesz|flat|atoms)")


def _coefficient(cfg: Dict[str, Any]) -> solver.CoefficientFn:
    kind = cfg["type"]
    if kind == "zero":
        return solver.ZERO
    if kind == "linear":
        return solver.linear_fn(float(cfg["lambda"]))
    if kind == "sine":
        return solver.sine_fn(float(cfg["lambda"]))
    if kind == "affine":
        return solver.CoefficientFn("affine", lam=float(cfg["lambda"]),
                                    offset=float(cfg["offset"]))
    if kind == "named":
        return solver.CoefficientFn("named", name=cfg["name"])
    raise ConfigError(f"unknown coefficient type {kind!r}")


def _field_from_name(name: Optional[str], grid: lattice.GridSpec) -> np.ndarray:
    if name in (None, "zero"):
        return solver.zero_field(grid)
    if name in ("gaussian-bump", "gaussian_bump"):
        return lattice.gaussian_bump(grid)
    raise ConfigError(f"unknown field name {name!r} (zero|gaussian-bump)")


def build_solver_config(config: Dict[str, Any], seed: int) -> solver.SolverConfig:
    params = model.ModelParams(k=float(config["model"]["k"]),
                               d=int(config["model"]["d"]),
                               T=float(config["model"]["T"]))
    measure = build_measure(config["measure"], params.d)
    grid = lattice.make_grid(params.d, float(config["grid"]["L"]),
                             int(config["grid"]["N"]))
    s = config["solver"]
    dt = s["dt"] if s["dt"] is not None else params.T / 2**10
    forced = None
    if s["forced_z"] is not None:
        forced = _field_from_name(s["forced_z"], grid)
    return solver.SolverConfig(
        params=params, measure=measure, grid=grid, dt=float(dt),
        sigma=_coefficient(s["sigma"]), b=_coefficient(s["b"]),
        v0=_field_from_name(s["v0"], grid),
        v0_tilde=_field_from_name(s["v0_tilde"], grid),
        alpha=float(s["alpha"]), seed=int(seed), forced_z=forced,
        dealias=bool(s["dealias"]))


def build_settings(config: Dict[str, Any]) -> quadrature.QuadratureSettings:
    q = config["quadrature"]
    return quadrature.QuadratureSettings(
        rel_tol=float(q["rel_tol"]), abs_tol=float(q["abs_tol"]),
        truncation_radius=float(q["truncation_radius"]),
        max_subdivisions=int(q["max_subdivisions"]))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _fmt(x: Any) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path: Path, header: List[str], rows: List[List[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _workers(exp: Dict[str, Any]) -> int:
    w = int(exp.get("workers", 0) or 0)
    return w if w > 0 else max(1, os.cpu_count() or 1)


def _run_check(config, exp, seed, settings, out_dir, files):
    params = config["model"]
    measure = build_measure(config["measure"], int(params["d"]))
    rows = []
    ok = True
    rep = model.check_dalang_condition(measure, float(params["k"]),
                                       float(exp["alpha"]), settings,
                                       method=exp["method"])
    rows.append([rep.condition_id, exp["alpha"], "", rep.value, rep.holds,
                 rep.method, rep.status])
    ok &= rep.status == "ok"
    if exp["eta"] is not None:
        rep2 = model.check_eta_condition(measure, float(params["k"]),
                                         float(exp["alpha"]), float(exp["eta"]),
                                         settings, method=exp["method"])
        rows.append([rep2.condition_id, exp["alpha"], exp["eta"], rep2.value,
                     rep2.holds, rep2.method, rep2.status])
        ok &= rep2.status == "ok"
    path = out_dir / "conditions.csv"
    _write_csv(path, ["condition", "alpha", "eta", "value", "holds", "method", "status"], rows)
    files.append(path)
    return ok


def _run_exponents(config, exp, seed, settings, out_dir, files):
    params = config["model"]
    measure = build_measure(config["measure"], int(params["d"]))
    q = math.inf if exp["q"] in ("inf", None) else float(exp["q"])
    query = model.SmoothnessQuery(alpha=float(exp["alpha"]), eta=float(exp["eta"]),
                                  delta=float(exp["delta"]),
                                  gamma_ic=float(exp["gamma_ic"]), q=q)
    mp = model.ModelParams(k=float(params["k"]), d=int(params["d"]),
                           T=float(params["T"]))
    report = model.holder_exponents(mp, measure, query, settings)
    path = out_dir / "exponents.csv"
    _write_csv(path,
               ["alpha_max", "theta0", "theta1", "moment_slope",
                "time_holder_sup", "spatial_holder_sup"],
               [[report.alpha_max, report.theta0,
                 "" if report.theta1 is None else report.theta1,
                 "" if report.moment_slope is None else report.moment_slope,
                 report.time_holder_sup,
                 "" if report.spatial_holder_sup is None else report.spatial_holder_sup]])
    files.append(path)
    return True


def _run_isometry(config, exp, seed, settings, out_dir, files):
    params = config["model"]
    measure = build_measure(config["measure"], int(params["d"]))
    alpha = float(exp["alpha"])
    value = quadrature.isometry_functional(
        measure, float(params["k"]), alpha, quadrature.GaussianBump(),
        float(params["T"]), reversed=bool(exp["reversed"]), settings=settings)
    rows = [["quadrature", value, "", ""]]
    ok = True
    if int(exp["mc_paths"]) > 0:
        cfg = build_solver_config(config, seed)
        if cfg.forced_z is None:
            raise ConfigError("isometry mc comparison requires solver.forced_z")
        est = estimators.mc_moment(cfg, t=cfg.params.T, alpha=alpha, q=2.0,
                                   n_paths=int(exp["mc_paths"]),
                                   workers=_workers(exp))
        rel = abs(est.mean - value) / value
        rows.append(["monte-carlo", est.mean, est.std_error, rel])
        ok = rel <= float(exp["mc_tolerance"])
    path = out_dir / "isometry.csv"
    _write_csv(path, ["method", "value", "std_error", "rel_err_vs_quadrature"], rows)
    files.append(path)
    return ok


def _run_scaling(config, exp, seed, settings, out_dir, files):
    params = config["model"]
    measure = build_measure(config["measure"], int(params["d"]))
    k = float(params["k"])
    alpha = float(exp["alpha"])
    t1 = float(exp["t1"])
    lags = [float(h) for h in exp["lags"]]
    theory = estimators.theory_increment_slope(measure, k, alpha, float(exp["q"]))
    if exp["method"] == "quadrature":
        moments = [quadrature.increment_second_moment(
            measure, k, alpha, quadrature.GaussianBump(), t1, t1 + h, settings)
            for h in lags]
        fit = estimators.fit_scaling(lags, moments,
                                     [m * 1e-8 for m in moments], theory)
        rows = [[h, m, 0.0, math.log(h), math.log(m)] for h, m in zip(lags, moments)]
        ok = abs(fit.slope - theory) <= float(exp["tolerance"])
    elif exp["method"] == "mc":
        cfg = build_solver_config(config, seed)
        fit = estimators.mc_increment_scaling(cfg, t1, lags, alpha,
                                              float(exp["q"]),
                                              int(exp["n_paths"]),
                                              workers=_workers(exp))
        rows = [[m_.t and h, m_.mean, m_.std_error, math.log(h), math.log(m_.mean)]
                for h, m_ in zip(fit.lags, fit.moments)]
        ok = fit.verdict == "consistent"
    else:
        raise ConfigError(f"scaling.method must be quadrature|mc, got {exp['method']!r}")
    path = out_dir / "scaling.csv"
    _write_csv(path, ["lag", "moment", "std_error", "log_lag", "log_moment"], rows)
    summary = out_dir / "scaling_fit.csv"
    _write_csv(summary,
               ["slope", "intercept", "ci_lo", "ci_hi", "theory_slope", "verdict",
                "dropped_lag"],
               [[fit.slope, fit.intercept, fit.slope_ci[0], fit.slope_ci[1],
                 fit.theory_slope, fit.verdict,
                 "" if fit.dropped_lag is None else fit.dropped_lag]])
    files.extend([path, summary])
    return ok


def _run_frontier(config, exp, seed, settings, out_dir, files):
    cfg = build_solver_config(config, seed)
    report = estimators.regularity_frontier(
        cfg, t=float(exp["t"]), alpha_grid=[float(a) for a in exp["alpha_grid"]],
        n_paths=int(exp["n_paths"]),
        grid_sizes=[int(n) for n in exp["grid_sizes"]], workers=_workers(exp))
    rows = [[r.alpha, r.grid_n, r.estimate, r.std_error,
             report.verdicts[r.alpha]] for r in report.rows]
    path = out_dir / "frontier.csv"
    _write_csv(path, ["alpha", "N", "estimate", "std_error", "verdict"], rows)
    files.append(path)
    if exp["expected"]:
        return all(report.verdicts.get(float(a)) == v
                   for a, v in exp["expected"].items())
    return True


def _run_simulate(config, exp, seed, settings, out_dir, files):
    cfg = build_solver_config(config, seed)
    times = exp["snapshot_times"]
    if times is None:
        times = [cfg.params.T * j / 8.0 for j in range(9)]
    traj = solver.solve_path(cfg, snapshot_times=[float(t) for t in times])
    path = out_dir / "norms.csv"
    traj.to_csv(path)
    files.append(path)
    if exp["store_fields"]:
        for t, state in zip(traj.times, traj.states):
            fpath = out_dir / f"field_t{t:.6f}.bin"
            lattice.save_field(fpath, cfg.grid, state.position.values())
            files.append(fpath)
    return True


def _run_validate_noise(config, exp, seed, settings, out_dir, files):
    params = config["model"]
    measure = build_measure(config["measure"], int(params["d"]))
    grid = lattice.make_grid(int(params["d"]), float(config["grid"]["L"]),
                             int(config["grid"]["N"]))
    spec = noise.NoiseSpec.build(measure, grid)
    report = noise.validate_covariance(spec, int(exp["n_samples"]), seed=seed,
                                       dt=float(exp["dt"]))
    path = out_dir / "noise_validation.csv"
    _write_csv(path,
               ["n_samples", "n_modes", "max_rel_deviation", "band_half_width",
                "passed"],
               [[report.n_samples, report.n_modes_checked,
                 report.max_rel_deviation, report.band_half_width, report.passed]])
    files.append(path)
    return report.passed


_RUNNERS = {
    "check": _run_check,
    "exponents": _run_exponents,
    "isometry": _run_isometry,
    "scaling": _run_scaling,
    "frontier": _run_frontier,
    "simulate": _run_simulate,
    "validate-noise": _run_validate_noise,
}


def run(config_path: str, out_dir: str = ".", overrides: Optional[List[str]] = None,
        check: bool = False, env: Optional[Dict[str, str]] = None) -> int:
    """Execute one experiment config; returns the process exit code."""
    env = os.environ if env is None else env
    started = datetime.datetime.now(datetime.timezone.utc)
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        print(f"config not found: {config_path}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        if overrides:
            raw = apply_overrides(raw, overrides)
        config = validate_config(raw)
        seed = int(config["solver"]["seed"])
        if ENV_SEED in env and not any(
                o.startswith("solver.seed=") for o in (overrides or [])):
            seed = int(env[ENV_SEED])
        config["solver"]["seed"] = seed
        settings = build_settings(config)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        exp = config["experiment"]
        files: List[Path] = []
        echo = out / "config.echo.json"
        with open(echo, "w") as fh:
            json.dump(config, fh, indent=2, sort_keys=True)
        files.append(echo)
        ok = _RUNNERS[exp["kind"]](config, exp, seed, settings, out, files)
    except (ConfigError, DomainError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, BlowUpError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    finished = datetime.datetime.now(datetime.timezone.utc)
    manifest = {
        "config_digest": config_digest(config),
        "tool_version": __version__,
        "master_seed": seed,
        "started_at": started.isoformat(),
        "finished_at": finished.isoformat(),
        "outputs": [str(p.name) for p in files],
    }
    with open(Path(out_dir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    if check and not ok:
        print("check failed", file=sys.stderr)
        return 4
    return 0


def self_test(scale: str = "quick", workers: int = 0,
              only: Optional[List[str]] = None) -> int:
    """Run the acceptance suite; exit 0 on all-pass, 4 otherwise."""
    if scale not in ("quick", "full"):
        print(f"scale must be quick|full, got {scale!r}", file=sys.stderr)
        return 2
    workers = workers if workers > 0 else max(1, os.cpu_count() or 1)
    results = acceptance.run_all(scale=scale, workers=workers, only=only)
    failing = [r.name for r in results if not r.passed]
    total = sum(r.seconds for r in results)
    print(f"\n{len(results) - len(failing)}/{len(results)} criteria passed "
          f"({total:.0f}s, scale={scale})")
    if failing:
        print("failing criteria: " + ", ".join(failing))
        return 4
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracwave",
        description="Spectral lab for the stochastic fractional wave equation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=".", help="output directory")
    p_run.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="KEY=VALUE", help="override a config entry")
    p_run.add_argument("--workers", type=int, default=0,
                       help="worker processes (0 = machine parallelism)")
    p_run.add_argument("--check", action="store_true",
                       help="exit 4 when the experiment's own check fails")

    p_test = sub.add_parser("self-test", help="run the acceptance suite")
    p_test.add_argument("--scale", choices=("quick", "full"), default="quick")
    p_test.add_argument("--workers", type=int, default=0)
    p_test.add_argument("--only", action="append", default=None,
                        help="run only the named criteria")

    args = parser.parse_args(argv)
    if args.command == "run":
        overrides = list(args.overrides)
        if args.workers:
            overrides.append(f"experiment.workers={args.workers}")
        return run(args.config, out_dir=args.out, overrides=overrides,
                   check=args.check)
    return self_test(scale=args.scale, workers=args.workers, only=args.only)


if __name__ == "__main__":
    sys.exit(main())
