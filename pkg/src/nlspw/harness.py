"""End-to-end experiments: the Gamma-path dichotomy scan, the instability
pair and small-data scattering runs.

A plan is a JSON file naming the model, the lattice, the seeds and the
evolution controls.  Every run writes per-seed CSV series, one summary
JSON and a manifest with SHA-256 hashes of everything it wrote.  Outputs
contain no wall-clock data, so identical plans give identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .classifier import Membership, classify, instability_pair
from .evolution import (
    DiagnosticRefused,
    EvolveConfig,
    Termination,
    TrajectoryRecord,
    evolve,
    pw_invariance_check,
    scattering_diagnostic,
)
from .grid import Field, GridSpec, ModelParams, h1_norm
from .ground_state import GroundState, cached_ground_state
from .virial import LedgerRefused, build_weights, virial_ledger, virial_monitor

log = logging.getLogger(__name__)

#: Blowup is certified only when ||grad psi|| grew by at least this factor
#: and the run stopped on the gradient cap or the time-step floor.
BLOWUP_GROWTH = 10.0
CONCAVITY_WINDOW = 20


class PlanError(ValueError):
    """The experiment plan is malformed or violates a precondition."""


class SeedRunError(RuntimeError):
    """A sub-run refused; carries the seed label for context."""


@dataclass
class ExperimentPlan:
    """Inputs of one experiment.

    ``s_values`` are Gamma-path scales (seed s*Q); ``eps_fractions`` are
    instability distances as fractions of ||Q||_H1; ``small_data_amplitude``
    adds a Gaussian a*exp(-|x|^2/2) seed.  ``virial_R`` defaults to L/4.
    """

    name: str
    params: ModelParams
    grid: GridSpec
    s_values: list = field(default_factory=list)
    eps_fractions: list = field(default_factory=list)
    small_data_amplitude: float | None = None
    evolve: EvolveConfig = field(default_factory=EvolveConfig)
    out_dir: str = "runs"
    virial_R: float | None = None
    gs_tol: float = 1e-11
    gs_cache: str | None = None
    ledger_tol: float = 1e-2
    workers: int = 1

    def __post_init__(self):
        if self.params.d != self.grid.d:
            raise PlanError("params and grid have different dimensions")
        if any(not s > 0 for s in self.s_values):
            raise PlanError("all s-values must be positive")
        if any(not e > 0 for e in self.eps_fractions):
            raise PlanError("instability eps must be positive")
        if any(not e < 1 for e in self.eps_fractions):
            raise PlanError("instability eps fractions must be below 1")
        if self.small_data_amplitude is not None and not self.small_data_amplitude > 0:
            raise PlanError("small-data amplitude must be positive")
        if self.workers < 1:
            raise PlanError("workers must be >= 1")

    @property
    def radius(self) -> float:
        return self.virial_R if self.virial_R is not None else self.grid.L / 4.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "s_values": list(self.s_values),
            "eps_fractions": list(self.eps_fractions),
            "small_data_amplitude": self.small_data_amplitude,
            "evolve": self.evolve.to_dict(),
            "out_dir": self.out_dir,
            "virial_R": self.virial_R,
            "gs_tol": self.gs_tol,
            "gs_cache": self.gs_cache,
            "ledger_tol": self.ledger_tol,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        data = dict(data)
        try:
            pd = data.pop("params")
            params = ModelParams(int(pd["d"]), float(pd["p"]), float(pd.get("omega", 1.0)))
            gd = dict(data.pop("grid"))
            gd.setdefault("d", params.d)
            grid = GridSpec.from_dict(gd)
            cfg = EvolveConfig(**data.pop("evolve", {}))
            name = data.pop("name")
        except KeyError as exc:
            raise PlanError(f"plan is missing {exc}") from None
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise PlanError(f"unknown plan keys: {sorted(unknown)}")
        return cls(name=name, params=params, grid=grid, evolve=cfg, **data)

    @classmethod
    def load(cls, path) -> "ExperimentPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


# --- per-seed bookkeeping --------------------------------------------------

@dataclass
class SeedRow:
    seed: str
    kind: str  # "path", "instability+", "instability-", "small_data"
    scale: float
    membership: str
    termination: str
    termination_detail: str
    t_final: float
    growth: float
    boundary: bool = False
    outcome: str = "INCONCLUSIVE"  # BOUNDED, BLOWUP, BLOWUP_SIGNAL, INCONCLUSIVE
    checks: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (Membership, Termination)):
        return x.value
    raise TypeError(f"not JSON serializable: {type(x)}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def small_data_field(grid: GridSpec, amplitude: float) -> Field:
    """a * exp(-|x|^2 / 2)."""
    return Field(grid, amplitude * np.exp(-0.5 * np.broadcast_to(grid.r ** 2, grid.shape)))


def second_divided_differences(t, v) -> np.ndarray:
    """Second divided differences of v(t) on a possibly non-uniform time grid
    (twice the finite-difference estimate of v''/2 at interior samples)."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return 2.0 * ((v[2:] - v[1:-1]) / h2 - (v[1:-1] - v[:-2]) / h1) / (h1 + h2)


def concavity_check(tr: TrajectoryRecord, window: int = CONCAVITY_WINDOW) -> dict:
    """Sign of d^2/dt^2 (W_R, |psi|^2) over the last ``window`` records, from
    second divided differences (the adaptive step makes the spacing uneven)."""
    W = np.asarray(tr.series.get("virial_W", []), dtype=float)
    if W.size < window + 2:
        return {"available": False, "strictly_concave": False, "max_second_difference": None}
    d2 = second_divided_differences(tr.times, W)[-window:]
    return {"available": True, "strictly_concave": bool(np.all(d2 < 0.0)),
            "max_second_difference": float(d2.max())}


def blowup_certified(tr: TrajectoryRecord, growth: float) -> bool:
    return (tr.termination is Termination.BLOWUP_DETECTED
            and tr.termination_detail in ("grad_cap", "dt_floor")
            and growth >= BLOWUP_GROWTH)


def _outcome(tr: TrajectoryRecord, growth: float, bounded: bool) -> str:
    if blowup_certified(tr, growth):
        return "BLOWUP"
    if tr.termination is Termination.BLOWUP_DETECTED:
        return "BLOWUP_SIGNAL"
    if tr.termination is Termination.HORIZON_REACHED and bounded:
        return "BOUNDED"
    return "INCONCLUSIVE"


class Runner:
    """Shared state of one plan: ground state, virial weights, output paths."""

    def __init__(self, plan: ExperimentPlan, gs: GroundState | None = None):
        self.plan = plan
        self.out = Path(plan.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        if gs is None:
            gs = cached_ground_state(plan.params, plan.grid, plan.gs_tol, cache_dir=plan.gs_cache)
        if gs.grid != plan.grid or gs.params != plan.params:
            raise PlanError("ground state does not match the plan's params and grid")
        self.gs = gs
        self.weights = build_weights(plan.grid, plan.params, plan.radius)
        self.written: list[Path] = []

    def evolve_seed(self, label: str, f: Field) -> TrajectoryRecord:
        cfg = EvolveConfig(**self.plan.evolve.to_dict())
        try:
            tr = evolve(f, cfg, self.plan.params, monitors=[virial_monitor(self.weights)])
        except Exception as exc:
            raise SeedRunError(f"seed {label}: evolution failed: {exc}") from exc
        self.written.append(tr.to_csv(self.out / f"{label}.csv"))
        return tr

    def ledger(self, label: str, tr: TrajectoryRecord) -> dict:
        try:
            led = virial_ledger(tr, self.weights)
        except LedgerRefused as exc:
            raise SeedRunError(f"seed {label}: virial ledger refused: {exc}") from exc
        self.written.append(led.to_csv(self.out / f"{label}_virial.csv"))
        return led.summary()

    def invariance(self, label: str, tr: TrajectoryRecord) -> dict:
        try:
            return pw_invariance_check(tr, self.gs).to_dict()
        except DiagnosticRefused as exc:
            raise SeedRunError(f"seed {label}: invariance check refused: {exc}") from exc

    def pw_seed(self, label: str, kind: str, scale: float, f: Field) -> SeedRow:
        """classify -> evolve -> invariance -> virial ledger for one seed."""
        verdict = classify(f, self.gs)
        tr = self.evolve_seed(label, f)
        gn = tr.series["grad_norm"]
        growth = float(gn[-1] / gn[0])
        row = SeedRow(label, kind, scale, verdict.membership.value, tr.termination.value,
                      tr.termination_detail, float(tr.times[-1]), growth)
        led = self.ledger(label, tr)
        row.diagnostics["verdict"] = verdict.to_dict()
        row.diagnostics["virial"] = led
        row.diagnostics["concavity"] = concavity_check(tr)
        row.diagnostics["steps"] = tr.steps
        if verdict.membership not in (Membership.PW_PLUS, Membership.PW_MINUS):
            # the seam K = 0 of the well and data outside it: evolve, but
            # make no invariance claims
            row.boundary = verdict.membership is Membership.ON_K_ZERO_BOUNDARY
            row.outcome = _outcome(tr, growth, bounded=False)
            return row
        inv = self.invariance(label, tr)
        row.diagnostics["invariance"] = inv
        row.checks["membership_invariant"] = not inv["violations"]
        row.checks["k_gap_bound"] = not inv["k_gap_violations"]
        row.checks["virial_ledger"] = led["max_residual"] <= self.plan.ledger_tol
        if verdict.membership is Membership.PW_PLUS:
            bounded = inv["sup_grad_sq"] <= inv["gradient_bound"]
            row.checks["gradient_bound"] = bool(bounded)
            row.checks["global_existence"] = tr.termination is not Termination.BLOWUP_DETECTED
            row.outcome = _outcome(tr, growth, bounded)
        else:
            row.checks["blowup_detected"] = tr.termination is Termination.BLOWUP_DETECTED
            row.checks["blowup_certified"] = blowup_certified(tr, growth)
            row.outcome = _outcome(tr, growth, bounded=False)
        return row

    def small_data_seed(self, amplitude: float) -> SeedRow:
        label = f"small_a{amplitude:g}"
        f = small_data_field(self.plan.grid, amplitude)
        return self.pw_seed(label, "small_data", amplitude, f)

    def finish(self, kind: str, rows: list[SeedRow], extra: dict | None = None) -> dict:
        summary = {
            "experiment": kind,
            "plan": self.plan.to_dict(),
            "ground_state": {
                "residual": self.gs.residual,
                "constants": self.gs.constants,
                "k_defect": self.gs.k_defect,
            },
            "rows": [r.to_dict() for r in rows],
            "passed": all(r.passed for r in rows),
        }
        if extra:
            summary.update(extra)
        summary_path = self.out / f"{kind}_summary.json"
        summary_path.write_text(_dumps(summary))
        manifest = {
            "experiment": kind,
            "plan": self.plan.to_dict(),
            "tolerances": {"ledger": self.plan.ledger_tol, "blowup_growth": BLOWUP_GROWTH,
                           "concavity_window": CONCAVITY_WINDOW},
            "outputs": {p.name: _sha256(p) for p in sorted(set(self.written + [summary_path]))},
            "pass": {r.seed: r.passed for r in rows},
            "passed": summary["passed"],
        }
        (self.out / f"{kind}_manifest.json").write_text(_dumps(manifest))
        return summary


def _map(plan: ExperimentPlan, fn, items):
    if plan.workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=plan.workers) as pool:
        return list(pool.map(fn, items))


def run_dichotomy(plan: ExperimentPlan, gs: GroundState | None = None) -> dict:
    """Run every Gamma-path seed s*Q (and the small-data seed, if any).

    Each row records membership, termination and which checks passed:
    membership invariance and the K-gap bound for every seed in the well,
    the gradient bound for PW+, and blowup detection for PW-.  Seeds on the
    K = 0 seam (s = 1) are evolved but flagged ``boundary`` and exempt.
    """
    runner = Runner(plan, gs)
    q = runner.gs.profile

    def one(s):
        return runner.pw_seed(f"s{s:g}", "path", float(s), q * float(s))

    rows = _map(plan, one, list(plan.s_values))
    if plan.small_data_amplitude is not None:
        rows.append(runner.small_data_seed(plan.small_data_amplitude))
    return runner.finish("dichotomy", rows)


def run_instability(plan: ExperimentPlan, gs: GroundState | None = None) -> dict:
    """For each eps (a fraction of ||Q||_H1): build f_+ and f_-, evolve both.

    f_+ must stay bounded (the PW+ gradient bound) and f_- must trigger
    blowup detection.  Pairs whose signs the classifier slack cannot
    resolve are reported as indeterminate without assertions.
    """
    if not plan.eps_fractions:
        raise PlanError("run_instability needs at least one eps")
    runner = Runner(plan, gs)
    qn = h1_norm(runner.gs.profile)
    rows: list[SeedRow] = []
    pairs = []
    for frac in plan.eps_fractions:
        eps = float(frac) * qn
        pair = instability_pair(runner.gs, eps)
        info = pair.to_dict()
        info["eps_fraction"] = float(frac)
        pairs.append(info)
        if not pair.determinate:
            log.warning("instability pair at eps=%g is indeterminate", eps)
            continue
        for sign, f in (("+", pair.f_plus), ("-", pair.f_minus)):
            label = f"eps{frac:g}{'p' if sign == '+' else 'm'}"
            row = runner.pw_seed(label, "instability" + sign, float(frac), f)
            row.diagnostics["h1_distance"] = pair.dist_plus if sign == "+" else pair.dist_minus
            row.checks["h1_distance"] = abs(row.diagnostics["h1_distance"] - eps) <= 1e-10 * qn
            rows.append(row)
    return runner.finish("instability", rows, {"pairs": pairs, "q_h1_norm": qn})


def run_small_data(plan: ExperimentPlan, gs: GroundState | None = None) -> dict:
    """Small-data Gaussian run with the scattering indicators."""
    if plan.small_data_amplitude is None:
        raise PlanError("run_small_data needs small_data_amplitude")
    runner = Runner(plan, gs)
    a = plan.small_data_amplitude
    label = f"small_a{a:g}"
    f = small_data_field(plan.grid, a)
    cfg = EvolveConfig(**plan.evolve.to_dict())
    tr = evolve(f, cfg, plan.params)
    runner.written.append(tr.to_csv(runner.out / f"{label}.csv"))
    gn = tr.series["grad_norm"]
    row = SeedRow(label, "small_data", a, classify(f, runner.gs).membership.value,
                  tr.termination.value, tr.termination_detail, float(tr.times[-1]),
                  float(gn[-1] / gn[0]))
    try:
        diag = scattering_diagnostic(tr)
    except DiagnosticRefused as exc:
        raise SeedRunError(f"seed {label}: {exc}") from exc
    row.diagnostics["scattering"] = diag
    row.checks["lp1_monotone"] = diag["lp1_monotone_decreasing"]
    row.checks["cauchy_small"] = diag["cauchy_relative"] <= 0.05
    row.outcome = "BOUNDED" if tr.termination is Termination.HORIZON_REACHED else "INCONCLUSIVE"
    return runner.finish("small_data", [row])
