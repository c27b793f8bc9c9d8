"""Command-line interface.

    nlspw ground-state --d 3 --p 3
    nlspw constants --d 3 --p 3 --format csv
    nlspw classify --field f.bin --ground-state q.bin
    nlspw evolve --d 3 --p 3 --scale 0.5 --t-end 1
    nlspw virial --d 1 --p 7 --free --t-end 0.25
    nlspw scan --plan gamma_d3p3.json

Configuration is layered: built-in defaults, then ``--config FILE`` (JSON),
then explicit flags, then ``--set key=value`` overrides; the last wins.
The effective configuration is echoed into every report.  Every command
writes ``<out>/<command>_report.json``.  Exit status: 0 when all asserted
checks pass, 1 when one fails, 2 when the inputs are refused.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .classifier import classify
from .evolution import (
    DiagnosticRefused,
    EvolveConfig,
    conservation_drift,
    evolve,
    pw_invariance_check,
)
from .grid import Field, GridSpec, ModelParams, ParameterError, load_field, save_field
from .ground_state import (
    GroundStateError,
    cached_ground_state,
    load_ground_state,
    save_ground_state,
    verify_variational_relations,
)
from .harness import ExperimentPlan, PlanError, SeedRunError, run_dichotomy, run_instability, run_small_data
from .virial import (
    LedgerRefused,
    WeightConstructionError,
    build_weights,
    weight_bounds_certificate,
    density_certificate,
    profile_monotone_on_samples,
    virial_ledger,
    virial_monitor,
)

log = logging.getLogger("nlspw")

EXIT_OK, EXIT_FAIL, EXIT_REFUSED = 0, 1, 2

#: Default lattice per dimension: (points per axis, box half-length).
DEFAULT_GRIDS = {1: (512, 20.0), 2: (256, 16.0), 3: (128, 9.0)}

DEFAULTS = {
    "d": 3,
    "p": 3.0,
    "omega": 1.0,
    "n": None,
    "L": None,
    "dt": 1e-3,
    "t_end": 1.0,
    "adapt": True,
    "tol": 1e-11,
    "R": None,
    "plan": None,
    "experiment": "dichotomy",
    "out": "nlspw_out",
    "format": "json",
    "field": None,
    "ground_state": None,
    "scale": None,
    "amplitude": None,
    "free": False,
    "ledger_tol": 1e-2,
    "cache": None,
}

# flag dest -> config key
FLAG_KEYS = {
    "d": "d", "p": "p", "omega": "omega", "grid_n": "n", "box_L": "L", "dt": "dt",
    "t_end": "t_end", "tol": "tol", "radius_R": "R", "plan": "plan", "out": "out",
    "format": "format", "field": "field", "ground_state": "ground_state", "scale": "scale",
    "amplitude": "amplitude", "free": "free", "experiment": "experiment",
    "ledger_tol": "ledger_tol", "cache": "cache", "fixed_step": "adapt",
}


class ConfigError(ValueError):
    pass


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip().replace("-", "_")
    if not key:
        raise ConfigError(f"override {item!r} has an empty key")
    return key, _parse_value(raw.strip())


def effective_config(args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicit flags <- --set overrides."""
    cfg = dict(DEFAULTS)
    if args.config:
        data = json.loads(Path(args.config).read_text())
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg.update(data)
    for dest, key in FLAG_KEYS.items():
        val = getattr(args, dest, None)
        if val is None:
            continue
        if dest == "fixed_step":
            if val:
                cfg["adapt"] = False
            continue
        if dest == "free" and not val:
            continue
        cfg[key] = val
    for item in args.set or []:
        key, val = parse_override(item)
        cfg[key] = val
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    if cfg["format"] not in ("json", "csv"):
        raise ConfigError("format must be json or csv")
    # resolve the lattice so that reports echo the grid actually used
    if cfg["d"] in DEFAULT_GRIDS:
        n0, L0 = DEFAULT_GRIDS[cfg["d"]]
        cfg["n"] = n0 if cfg["n"] is None else cfg["n"]
        cfg["L"] = L0 if cfg["L"] is None else cfg["L"]
    cfg["command"] = args.command
    return cfg


def _params(cfg) -> ModelParams:
    return ModelParams(int(cfg["d"]), float(cfg["p"]), float(cfg["omega"]))


def _grid(cfg) -> GridSpec:
    d = int(cfg["d"])
    n0, L0 = DEFAULT_GRIDS[d]
    n = int(cfg["n"]) if cfg["n"] is not None else n0
    L = float(cfg["L"]) if cfg["L"] is not None else L0
    return GridSpec(d, n, L)


def _ground_state(cfg):
    if cfg["ground_state"]:
        return load_ground_state(cfg["ground_state"])
    return cached_ground_state(_params(cfg), _grid(cfg), float(cfg["tol"]), cache_dir=cfg["cache"])


def _initial_field(cfg, gs) -> Field:
    if cfg["field"]:
        return load_field(cfg["field"])
    if cfg["amplitude"] is not None:
        grid = gs.grid if gs is not None else _grid(cfg)
        r2 = np.broadcast_to(grid.r ** 2, grid.shape)
        return Field(grid, float(cfg["amplitude"]) * np.exp(-0.5 * r2))
    if cfg["scale"] is None:
        raise ConfigError("give --field, --scale (s*Q) or --amplitude (Gaussian)")
    return gs.profile * float(cfg["scale"])


# --- output ---------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def _flatten(d: dict, prefix: str = "") -> list[tuple[str, object]]:
    rows = []
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            rows.extend(_flatten(v, key + "."))
        else:
            rows.append((key, v))
    return rows


def emit(cfg: dict, body: dict, checks: dict, stream=None) -> int:
    """Write the report file, print it, and return the exit status."""
    stream = stream or sys.stdout
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    report = _clean({"config": cfg, "kernels": kernels.BACKEND, "checks": checks,
                     "passed": all(checks.values()), **body})
    name = cfg["command"].replace("-", "_")
    (out / f"{name}_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if cfg["format"] == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in _flatten(report):
            w.writerow([k, json.dumps(v) if isinstance(v, (list, dict)) else v])
        (out / f"{name}_report.csv").write_text(buf.getvalue())
        stream.write(buf.getvalue())
    else:
        stream.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def refuse(cfg: dict, reason: str, extra: dict | None = None) -> int:
    out = Path(cfg.get("out") or DEFAULTS["out"])
    out.mkdir(parents=True, exist_ok=True)
    report = _clean({"config": cfg, "error": reason, "passed": False, **(extra or {})})
    name = str(cfg.get("command", "nlspw")).replace("-", "_")
    (out / f"{name}_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"error: {reason}", file=sys.stderr)
    return EXIT_REFUSED


# --- commands -------------------------------------------------------------

def cmd_ground_state(cfg: dict) -> int:
    params, grid = _params(cfg), _grid(cfg)
    gs = cached_ground_state(params, grid, float(cfg["tol"]), cache_dir=cfg["cache"])
    stem = Path(cfg["out"]) / f"ground_state_d{params.d}_p{params.p:g}_w{params.omega:g}"
    Path(cfg["out"]).mkdir(parents=True, exist_ok=True)
    field_path, side_path = save_ground_state(gs, stem)
    rel = verify_variational_relations(gs)
    c = gs.constants
    body = {
        "N1": c["N1"], "N2": c["N2"], "N3": c["N3"], "N2_tilde": c["N2_tilde"],
        "residual": gs.residual, "iterations": gs.iterations,
        "peak": float(np.max(gs.profile.values.real)),
        "K_over_grad_sq": gs.k_defect,
        "pohozaev": gs.pohozaev_errors(),
        "relations": rel,
        "profile": field_path.name, "sidecar": side_path.name,
    }
    checks = {"converged": gs.residual <= 10.0 * float(cfg["tol"]), "positive": gs.positive}
    return emit(cfg, body, checks)


def cmd_constants(cfg: dict) -> int:
    gs = _ground_state(cfg)
    params = gs.params
    c = gs.constants
    dp = params.dp
    body = {
        "N1": c["N1"], "N2": c["N2"], "N3": c["N3"], "N2_tilde": c["N2_tilde"],
        "N3_over_N2": c["N3"] / c["N2"],
        "N2_tilde_over_N2": c["N2_tilde"] / c["N2"],
        "gradient_bound_coefficient": dp / (dp - 4.0),
        "k_coefficient": params.k_coefficient,
        "s_p": params.s_p,
        "mass_Q": gs.report.mass, "grad_sq_Q": gs.report.grad_sq, "H_Q": gs.report.hamiltonian,
        "residual": gs.residual,
    }
    return emit(cfg, body, {})


def cmd_classify(cfg: dict) -> int:
    gs = _ground_state(cfg)
    f = _initial_field(cfg, gs)
    verdict = classify(f, gs)
    return emit(cfg, {"verdict": verdict.to_dict()}, {})


def _evolve_config(cfg) -> EvolveConfig:
    return EvolveConfig(dt0=float(cfg["dt"]), t_end=float(cfg["t_end"]), adapt=bool(cfg["adapt"]))


def cmd_evolve(cfg: dict) -> int:
    gs = _ground_state(cfg)
    f = _initial_field(cfg, gs)
    if f.grid != gs.grid:
        raise ConfigError("initial field and ground state live on different grids")
    tr = evolve(f, _evolve_config(cfg), gs.params)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    tr.to_csv(out / "trajectory.csv")
    tr.write_metadata(out / "trajectory.json")
    save_field(tr.final, out / "final.bin")
    body = {"termination": tr.termination.value, "termination_detail": tr.termination_detail,
            "t_final": float(tr.times[-1]), "steps": tr.steps,
            "drift": conservation_drift(tr), "verdict": classify(f, gs).to_dict()}
    checks = {}
    try:
        inv = pw_invariance_check(tr, gs)
        body["invariance"] = inv.to_dict()
        checks["pw_invariance"] = inv.ok
    except DiagnosticRefused as exc:
        body["invariance"] = {"refused": str(exc)}
    return emit(cfg, body, checks)


def _free_gaussian(grid: GridSpec) -> Field:
    r2 = np.broadcast_to(grid.r ** 2, grid.shape)
    phase = 0.5 * grid.coords[0]
    return Field(grid, np.exp(-0.5 * r2 + 1j * np.broadcast_to(phase, grid.shape)))


def cmd_virial(cfg: dict) -> int:
    """Weight certificates and the localized virial ledger along one run."""
    params = _params(cfg)
    if cfg["free"]:
        grid = _grid(cfg)
        f = _free_gaussian(grid)
        gs = None
    else:
        gs = _ground_state(cfg)
        params, grid = gs.params, gs.grid
        f = _initial_field(cfg, gs)
    R = float(cfg["R"]) if cfg["R"] is not None else grid.L / 4.0
    weights = build_weights(grid, params, R)
    a1 = weight_bounds_certificate(weights)
    a4 = density_certificate(weights)
    ecfg = _evolve_config(cfg)
    ecfg.nonlinear = not cfg["free"]
    tr = evolve(f, ecfg, params, monitors=[virial_monitor(weights)])
    ledger = virial_ledger(tr, weights)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ledger.to_csv(out / "virial_ledger.csv")
    weights.profile.to_csv(out / "virial_weight.csv", R=R, d=params.d)
    body = {"R": R, "weight_bounds": a1, "densities": a4, "ledger": ledger.summary(),
            "termination": tr.termination.value}
    checks = {"weight_bounds": a1["all_pass"], "densities": a4["all_pass"],
              "tail_monotone": profile_monotone_on_samples(weights),
              "ledger": ledger.max_residual <= float(cfg["ledger_tol"])}
    return emit(cfg, body, checks)


def cmd_scan(cfg: dict) -> int:
    if not cfg["plan"]:
        raise ConfigError("scan needs --plan")
    plan = ExperimentPlan.load(cfg["plan"])
    if cfg["out"] != DEFAULTS["out"]:
        plan.out_dir = cfg["out"]
    runners = {"dichotomy": run_dichotomy, "instability": run_instability,
               "small_data": run_small_data}
    if cfg["experiment"] not in runners:
        raise ConfigError(f"experiment must be one of {sorted(runners)}")
    summary = runners[cfg["experiment"]](plan)
    cfg = dict(cfg, out=plan.out_dir)
    rows = [{k: r[k] for k in ("seed", "membership", "termination", "outcome", "boundary", "passed")}
            for r in summary["rows"]]
    checks = {r["seed"]: r["passed"] for r in summary["rows"]}
    return emit(cfg, {"experiment": cfg["experiment"], "table": rows}, checks)


COMMANDS = {
    "ground-state": cmd_ground_state,
    "constants": cmd_constants,
    "classify": cmd_classify,
    "evolve": cmd_evolve,
    "virial": cmd_virial,
    "scan": cmd_scan,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model and lattice")
    g.add_argument("--d", type=int, help="spatial dimension (1, 2 or 3)")
    g.add_argument("--p", type=float, help="nonlinearity power")
    g.add_argument("--omega", type=float, help="ground-state frequency")
    g.add_argument("--grid-n", type=int, help="points per axis (power of two)")
    g.add_argument("--box-L", type=float, help="box half-length L of [-L, L)^d")
    g.add_argument("--tol", type=float, help="ground-state residual tolerance")
    g.add_argument("--ground-state", help="load Q from a saved .bin/.json pair")
    g.add_argument("--cache", help="directory caching ground-state solves")
    r = common.add_argument_group("runs")
    r.add_argument("--dt", type=float, help="base time step")
    r.add_argument("--t-end", type=float, help="time horizon")
    r.add_argument("--fixed-step", action="store_true", default=None,
                   help="disable the gradient-adaptive step")
    r.add_argument("--field", help="initial field file")
    r.add_argument("--scale", type=float, help="use s*Q as initial data")
    r.add_argument("--amplitude", type=float, help="use a*exp(-|x|^2/2) as initial data")
    r.add_argument("--radius-R", type=float, help="virial truncation radius (default L/4)")
    r.add_argument("--free", action="store_true", default=None,
                   help="virial: free Gaussian benchmark instead of NLS")
    r.add_argument("--ledger-tol", type=float, help="virial ledger residual tolerance")
    r.add_argument("--plan", help="experiment plan JSON (scan)")
    r.add_argument("--experiment", help="scan: dichotomy, instability or small_data")
    o = common.add_argument_group("output")
    o.add_argument("--config", help="JSON config file")
    o.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    o.add_argument("--out", help="output directory")
    o.add_argument("--format", choices=("json", "csv"), help="report format")
    o.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="nlspw", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ground-state": "solve for Q and write profile + constants",
        "constants": "table of N1, N2, N3 and derived ratios",
        "classify": "PW+/PW- membership of a field",
        "evolve": "split-step evolution with conservation and invariance reports",
        "virial": "weight certificates and the localized virial ledger",
        "scan": "run an experiment plan",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
    except (ConfigError, json.JSONDecodeError, OSError) as exc:
        return refuse({"command": args.command, "out": args.out}, str(exc))
    try:
        return COMMANDS[args.command](cfg)
    except GroundStateError as exc:
        trace = exc.history[-10:] if getattr(exc, "history", None) else []
        return refuse(cfg, str(exc), {"residual_trace": trace})
    except (ParameterError, ConfigError, PlanError, SeedRunError, LedgerRefused,
            WeightConstructionError, DiagnosticRefused, ValueError, OSError) as exc:
        return refuse(cfg, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
