"""Time stepping of  psi_t = (i/2) Laplacian psi + (i/2) |psi|^{p-1} psi.

Strang splitting: the nonlinear substep leaves |psi| unchanged pointwise,
so it is an exact phase rotation; the linear substep is the exact Fourier
multiplier.  :func:`evolve` marches with an optional gradient-adaptive step,
records the conserved quantities and K along the way, and stops on the
horizon, on numerical blowup, or when mass reaches the box edge.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .classifier import Membership, classify_report
from .functionals import (
    ExponentSet,
    FunctionalReport,
    n2_tilde_functional,
    report_from_values,
    spacetime_norms,
)
from .grid import (
    Field,
    GridSpec,
    ModelParams,
    NonFiniteFieldError,
    evaluate_trig_interpolant,
    fftn,
    free_propagate,
    h1_norm,
    ifftn,
    lq_norm,
)

log = logging.getLogger(__name__)


class Termination(str, Enum):
    HORIZON_REACHED = "HORIZON_REACHED"
    BLOWUP_DETECTED = "BLOWUP_DETECTED"
    BOUNDARY_CONTAMINATION = "BOUNDARY_CONTAMINATION"


class DiagnosticRefused(RuntimeError):
    """A diagnostic's precondition on the trajectory does not hold."""


class ResolutionError(RuntimeError):
    """Resampling lost more accuracy than allowed."""


@dataclass
class EvolveConfig:
    """Run controls.

    ``grad_cap`` defaults to 20x the initial ||grad psi||.  ``resolution_cap``
    bounds the fraction of spectral mass beyond 2/3 of the lattice cutoff;
    exceeding it while ||grad psi|| has grown by ``resolution_growth`` is a
    numerical blowup signal (the lattice can no longer follow the
    concentration).  ``record_every`` thins the functional series,
    ``snapshot_every`` stores fields (0: only first and last).
    """

    dt0: float = 1e-3
    t_end: float = 1.0
    adapt: bool = True
    grad_cap: float | None = None
    boundary_mass_cap: float = 1e-2
    snapshot_every: int = 0
    record_every: int = 1
    nonlinear: bool = True
    dt_floor: float = 1e-8
    resolution_cap: float | None = 1e-2
    resolution_growth: float = 1.5
    boundary_shell: float = 0.1
    max_steps: int | None = None

    def validate(self, initial_grad: float | None = None) -> None:
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")
        if (initial_grad is not None and self.grad_cap is not None
                and not self.grad_cap > initial_grad):
            raise ValueError(f"grad_cap {self.grad_cap} must exceed the initial ||grad psi|| {initial_grad}")

    def to_dict(self) -> dict:
        return asdict(self)


SERIES_KEYS = ("M", "H", "K", "Lp1", "grad_sq", "grad_norm", "N2_tilde", "boundary_mass",
               "tail_fraction", "dt")


@dataclass
class TrajectoryRecord:
    params: ModelParams
    grid: GridSpec
    cfg: EvolveConfig
    times: np.ndarray
    series: dict
    snapshots: list
    initial: Field
    termination: Termination
    termination_detail: str = ""
    wall_time: float = 0.0
    steps: int = 0

    @property
    def nonlinear(self) -> bool:
        return self.cfg.nonlinear

    @property
    def final(self) -> Field:
        return self.snapshots[-1][1]

    def report_at(self, i: int) -> FunctionalReport:
        s = self.series
        return FunctionalReport(
            mass=float(s["M"][i]),
            hamiltonian=float(s["H"][i]),
            momentum=tuple(float(x) for x in s["P"][i]),
            k_value=float(s["K"][i]),
            lp1_norm=float(s["Lp1"][i]),
            grad_sq=float(s["grad_sq"][i]),
        )

    def metadata(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "cfg": self.cfg.to_dict(),
            "termination": self.termination.value,
            "termination_detail": self.termination_detail,
            "t_final": float(self.times[-1]),
            "steps": self.steps,
            "wall_time": self.wall_time,
            "kernels": kernels.BACKEND,
        }

    def to_csv(self, path) -> Path:
        """Series as CSV: t, M, H, P_1.., K, Lp1, grad_norm and any monitors."""
        path = Path(path)
        d = self.grid.d
        extra = [k for k in self.series if k not in SERIES_KEYS and k != "P"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "M", "H", *[f"P{j}" for j in range(d)], "K", "Lp1", "grad_norm",
                        "N2_tilde", "dt", *extra])
            s = self.series
            for i, t in enumerate(self.times):
                w.writerow([repr(float(t)), repr(float(s["M"][i])), repr(float(s["H"][i])),
                            *(repr(float(x)) for x in s["P"][i]), repr(float(s["K"][i])),
                            repr(float(s["Lp1"][i])), repr(float(s["grad_norm"][i])),
                            repr(float(s["N2_tilde"][i])), repr(float(s["dt"][i])),
                            *(repr(float(s[k][i])) for k in extra)])
        return path

    def write_metadata(self, path, wall_time: bool = False) -> Path:
        """Run metadata JSON; wall time is left out unless asked for, so that
        identical runs write identical bytes."""
        meta = self.metadata()
        if not wall_time:
            meta.pop("wall_time")
        path = Path(path)
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path


# --- the split step -------------------------------------------------------

def _linear_multiplier(grid: GridSpec, dt: float) -> np.ndarray:
    """exp(-(i/2) dt |k|^2), tabulated over the distinct integer values of |k|^2."""
    idx = grid.k2_index
    top = int(idx.max())
    if top >= grid.size:
        return np.exp(-0.5j * dt * grid.k2)
    table = np.exp(-0.5j * dt * (np.pi / grid.L) ** 2 * np.arange(top + 1))
    return table[idx]


def _step_inplace(psi: np.ndarray, dt: float, p: float, grid: GridSpec, nonlinear: bool,
                  mult: np.ndarray | None = None) -> np.ndarray:
    if nonlinear:
        kernels.nonlinear_phase(psi, 0.25 * dt, p)
    if mult is None:
        mult = _linear_multiplier(grid, dt)
    ph = fftn(psi) * mult
    if grid.dealias and nonlinear:
        ph *= grid.dealias_mask
    psi = np.ascontiguousarray(ifftn(ph))
    if nonlinear:
        kernels.nonlinear_phase(psi, 0.25 * dt, p)
    return psi


def step(psi: Field, dt: float, params: ModelParams, nonlinear: bool = True) -> Field:
    """One Strang step: half nonlinear phase, full free flow, half phase.

    The nonlinear half step multiplies by exp((i/2)(dt/2)|psi|^{p-1}).
    Raises :class:`NonFiniteFieldError` when the result is not finite.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    psi.require_finite()
    if not nonlinear:
        return free_propagate(psi, dt)
    out = _step_inplace(np.array(psi.values), dt, params.p, psi.grid, True)
    res = Field(psi.grid, out)
    if not res.is_finite:
        raise NonFiniteFieldError("non-finite values after step (numerical blowup)")
    return res


# --- the march ------------------------------------------------------------

def _shell_mask(grid: GridSpec, shell: float) -> np.ndarray:
    edge = (1.0 - shell) * grid.L
    mask = np.zeros(grid.shape, dtype=bool)
    for x in grid.coords:
        mask |= np.abs(x) >= edge
    return mask


def _tail_mask(grid: GridSpec) -> np.ndarray:
    cut = (2.0 / 3.0) * grid.k_max
    mask = np.zeros(grid.shape, dtype=bool)
    raw = np.meshgrid(*([grid.k_axis] * grid.d), indexing="ij", sparse=True)
    for k in raw:
        mask |= np.abs(k) > cut
    return mask


Monitor = Callable[..., dict]


def evolve(psi0: Field, cfg: EvolveConfig, params: ModelParams,
           monitors: Sequence[Monitor] = (), progress: Callable | None = None) -> TrajectoryRecord:
    """March ``psi0`` to ``cfg.t_end`` or until a termination condition.

    Monitors are callables ``(values, grid, grads, nonlinear) -> dict`` whose
    entries are appended to the series at every recorded step.
    """
    if psi0.grid.d != params.d:
        raise ValueError("field and params have different dimensions")
    psi0.require_finite()
    grid = psi0.grid
    p = params.p
    wall0 = time.perf_counter()
    psi = np.array(psi0.values)
    fh = fftn(psi)
    rep0 = report_from_values(psi, grid, params, fh)
    g0 = np.sqrt(rep0.grad_sq)
    grad_cap = cfg.grad_cap if cfg.grad_cap is not None else 20.0 * g0
    cfg.validate(g0 if cfg.grad_cap is not None else None)
    shell = _shell_mask(grid, cfg.boundary_shell)
    tail = _tail_mask(grid)
    want_grads = bool(monitors)

    series: dict = {k: [] for k in SERIES_KEYS}
    series["P"] = []
    times: list = []
    snapshots = [(0.0, psi0)]

    def record(t, values, spec, dt, rep=None):
        rep = rep or report_from_values(values, grid, params, spec)
        power = spec.real ** 2 + spec.imag ** 2
        total = float(np.sum(power))
        dens = values.real ** 2 + values.imag ** 2
        times.append(t)
        series["M"].append(rep.mass)
        series["H"].append(rep.hamiltonian)
        series["P"].append(rep.momentum)
        series["K"].append(rep.k_value)
        series["Lp1"].append(rep.lp1_norm)
        series["grad_sq"].append(rep.grad_sq)
        series["grad_norm"].append(np.sqrt(rep.grad_sq))
        series["N2_tilde"].append(n2_tilde_functional(rep, params) if rep.hamiltonian >= 0 else np.nan)
        series["boundary_mass"].append(float(np.sum(dens[shell]) * grid.cell_volume) / rep.mass)
        series["tail_fraction"].append(float(np.sum(power[tail])) / total if total > 0 else 0.0)
        series["dt"].append(dt)
        if want_grads:
            grads = [ifftn(1j * k * spec) for k in grid.wavenumbers]
            for mon in monitors:
                for key, val in mon(values, grid, grads, cfg.nonlinear).items():
                    series.setdefault(key, []).append(val)
        return rep

    record(0.0, psi, fh, 0.0, rep0)
    t = 0.0
    n = 0
    g = g0
    prev_g = g0
    termination = Termination.HORIZON_REACHED
    detail = "horizon"
    mult_cache: dict = {}
    t_eps = 1e-12 * cfg.t_end
    while t < cfg.t_end - t_eps:
        if cfg.max_steps is not None and n >= cfg.max_steps:
            detail = "max_steps"
            break
        dt = cfg.dt0 / (1.0 + g / g0) if cfg.adapt else cfg.dt0
        if dt < cfg.dt_floor:
            if g > prev_g:
                termination, detail = Termination.BLOWUP_DETECTED, "dt_floor"
            else:
                detail = "dt_floor_stalled"
            break
        dt = min(dt, cfg.t_end - t)
        if cfg.adapt:
            mult = None
        else:
            mult = mult_cache.get(dt)
            if mult is None:
                mult = mult_cache.setdefault(dt, _linear_multiplier(grid, dt))
        new = _step_inplace(psi, dt, p, grid, cfg.nonlinear, mult)
        n += 1
        if not np.all(np.isfinite(new)):
            termination, detail = Termination.BLOWUP_DETECTED, "nan"
            break
        psi = new
        t += dt
        fh = fftn(psi)
        prev_g = g
        last = t >= cfg.t_end - t_eps
        rep = report_from_values(psi, grid, params, fh)
        g = np.sqrt(rep.grad_sq)
        if n % cfg.record_every == 0 or last or g > grad_cap:
            record(t, psi, fh, dt, rep)
            if cfg.snapshot_every and n % cfg.snapshot_every == 0 and not last:
                snapshots.append((t, Field(grid, psi)))
            if progress is not None:
                progress(t, rep)
            if g > grad_cap:
                termination, detail = Termination.BLOWUP_DETECTED, "grad_cap"
                break
            if (cfg.resolution_cap is not None and series["tail_fraction"][-1] > cfg.resolution_cap
                    and g > cfg.resolution_growth * g0):
                termination, detail = Termination.BLOWUP_DETECTED, "resolution"
                break
            if series["boundary_mass"][-1] > cfg.boundary_mass_cap:
                termination, detail = Termination.BOUNDARY_CONTAMINATION, "boundary_mass"
                break
    if snapshots[-1][0] != times[-1]:
        snapshots.append((times[-1], Field(grid, psi)))
    out_series = {k: np.asarray(v) for k, v in series.items()}
    tr = TrajectoryRecord(params, grid, cfg, np.asarray(times), out_series, snapshots, psi0,
                          termination, detail, time.perf_counter() - wall0, n)
    log.info("evolve: %s (%s) at t=%.4g after %d steps", termination.value, detail, t, n)
    return tr


# --- diagnostics ----------------------------------------------------------

def conservation_drift(tr: TrajectoryRecord, floor: float = 1e-14) -> dict:
    """Max over time of |X(t) - X(0)| / max(|X(0)|, floor) for M, H and each P_j.

    For the momentum the floor is raised to ||psi_0||_2 ||grad psi_0||_2,
    the Cauchy-Schwarz bound on |P|: real data have P = 0 exactly, and
    their drift is then measured against the scale P could take rather
    than against zero.  ``abs_dP`` is the unnormalized drift and
    ``dP_unit_floor`` the drift relative to ``max(|P_j(0)|, floor)`` alone.
    """
    s = tr.series
    if len(tr.times) == 0:
        raise ValueError("empty trajectory")

    def drift(x, scale):
        x = np.asarray(x, dtype=float)
        return float(np.max(np.abs(x - x[0])) / max(abs(x[0]), scale))

    P = np.asarray(s["P"], dtype=float).reshape(len(tr.times), -1)
    p_scale = max(floor, float(np.sqrt(s["M"][0] * s["grad_sq"][0])))
    dP = [drift(P[:, j], p_scale) for j in range(P.shape[1])]
    return {
        "dM": drift(s["M"], floor),
        "dH": drift(s["H"], floor),
        "dP": max(dP) if dP else 0.0,
        "dP_components": dP,
        "momentum_scale": p_scale,
        "abs_dP": float(np.max(np.abs(P - P[0]))) if P.size else 0.0,
        "dP_unit_floor": max((drift(P[:, j], floor) for j in range(P.shape[1])), default=0.0),
    }


@dataclass
class InvarianceReport:
    initial: Membership
    checked: int
    violations: list = field(default_factory=list)  # (index, t, membership)
    k_gap_violations: list = field(default_factory=list)  # (index, t, K, bound)
    k_bound: float = float("nan")
    min_k_margin: float = float("nan")
    gradient_bound: float | None = None
    sup_grad_sq: float = float("nan")

    @property
    def ok(self) -> bool:
        return not self.violations and not self.k_gap_violations

    @property
    def first_violation(self):
        return self.violations[0] if self.violations else None

    def to_dict(self) -> dict:
        return {
            "initial": self.initial.value,
            "checked": self.checked,
            "violations": [[i, t, m.value] for i, t, m in self.violations],
            "k_gap_violations": self.k_gap_violations,
            "k_bound": self.k_bound,
            "min_k_margin": self.min_k_margin,
            "gradient_bound": self.gradient_bound,
            "sup_grad_sq": self.sup_grad_sq,
            "ok": self.ok,
        }


def pw_invariance_check(tr: TrajectoryRecord, gs, kappa: float | None = None) -> InvarianceReport:
    """Classify every recorded state and check the K-gap bound.

    PW+ runs: K(psi(t)) >= (1 - N2-tilde(psi_0)/N2-tilde*) H(psi_0).
    PW- runs: K(psi(t)) < -(B(psi_0) - H(psi_0)).
    Both are checked up to the classifier's slack kappa ||grad psi(t)||^2.
    """
    v0 = classify_report(tr.report_at(0), gs, kappa)
    if v0.membership not in (Membership.PW_PLUS, Membership.PW_MINUS):
        raise DiagnosticRefused(f"initial data is {v0.membership.value}, not in PW+ or PW-")
    kappa = v0.kappa
    rep0 = v0.report
    params = gs.params
    if v0.membership is Membership.PW_PLUS:
        bound = (1.0 - v0.n2_tilde / gs.constants["N2_tilde"]) * rep0.hamiltonian
        grad_bound = params.dp / (params.dp - 4.0) * rep0.hamiltonian
    else:
        bound = -(v0.b_value - rep0.hamiltonian)
        grad_bound = None
    out = InvarianceReport(v0.membership, 0, k_bound=bound, gradient_bound=grad_bound)
    margins = []
    for i, t in enumerate(tr.times):
        rep = tr.report_at(i)
        v = classify_report(rep, gs, kappa)
        out.checked += 1
        if v.membership is not v0.membership:
            out.violations.append((i, float(t), v.membership))
        band = kappa * rep.grad_sq
        if v0.membership is Membership.PW_PLUS:
            margin = rep.k_value - bound
            if margin < -band:
                out.k_gap_violations.append((i, float(t), rep.k_value, bound))
        else:
            margin = bound - rep.k_value
            if margin <= -band:
                out.k_gap_violations.append((i, float(t), rep.k_value, bound))
        margins.append(margin)
    out.min_k_margin = float(np.min(margins))
    out.sup_grad_sq = float(np.max(tr.series["grad_sq"]))
    return out


def free_profile(f: Field, t: float) -> Field:
    """exp(-(i/2) t Laplacian) f, the asymptotic-state proxy at time t."""
    return free_propagate(f, -t)


def scattering_diagnostic(tr: TrajectoryRecord, exps: ExponentSet | None = None,
                          probe_q: Sequence[float] | None = None,
                          window_start: float = 0.5) -> dict:
    """Graded scattering indicators over the final part of the run.

    Reports: monotonicity and decay of ||psi(t)||_{p+1}^{p+1} on the window
    [window_start * T, T]; ||psi(t)||_q at the snapshots for each probe q
    and the log-log slope of ||psi||_{p+1} in t; windowed X-norm growth;
    and the H1 Cauchy increments of exp(-(i/2) t Laplacian) psi(t) between
    snapshots in the window (largest pairwise distance, relative to the
    H1 norm of the last one).
    """
    if tr.termination is Termination.BLOWUP_DETECTED:
        raise DiagnosticRefused(f"trajectory ended in numerical blowup ({tr.termination_detail})")
    p = tr.params.p
    times = np.asarray(tr.times)
    T = float(times[-1])
    sel = times >= window_start * T
    lp1 = np.asarray(tr.series["Lp1"])[sel]
    tw = times[sel]
    diffs = np.diff(lp1)
    monotone = bool(np.all(diffs < 0.0)) if diffs.size else False
    norm_p1 = lp1 ** (1.0 / (p + 1.0))
    pos = tw > 0
    slope = (float(np.polyfit(np.log(tw[pos]), np.log(norm_p1[pos]), 1)[0])
             if np.count_nonzero(pos) >= 2 else float("nan"))
    snaps = [(t, f) for t, f in tr.snapshots if t >= window_start * T]
    probe_q = list(probe_q) if probe_q is not None else [p + 1.0]
    q_table = {repr(q): [lq_norm(f, q) for _, f in snaps] for q in probe_q}
    profiles = [free_profile(f, t) for t, f in snaps]
    cauchy = 0.0
    consecutive = []
    for i in range(len(profiles)):
        for j in range(i + 1, len(profiles)):
            dist = h1_norm(profiles[j] - profiles[i])
            cauchy = max(cauchy, dist)
            if j == i + 1:
                consecutive.append(dist)
    ref = h1_norm(profiles[-1]) if profiles else float("nan")
    out = {
        "window": [float(window_start * T), T],
        "lp1_monotone_decreasing": monotone,
        "lp1_decay_ratio": float(lp1[-1] / lp1[0]) if lp1.size else float("nan"),
        "lp1_loglog_slope": slope,
        "q_norms": q_table,
        "snapshot_times": [float(t) for t, _ in snaps],
        "cauchy_diameter": cauchy,
        "cauchy_relative": cauchy / ref if profiles else float("nan"),
        "cauchy_consecutive": consecutive,
        "termination": tr.termination.value,
    }
    if exps is not None and len(tr.snapshots) >= 2:
        growth = []
        for k in range(2, len(tr.snapshots) + 1):
            norms = spacetime_norms(tr.snapshots[:k], exps)
            growth.append((float(tr.snapshots[k - 1][0]), norms["X"]))
        out["x_norm_growth"] = growth
        if len(growth) >= 2:
            (t1, x1), (t2, x2) = growth[-2], growth[-1]
            out["x_norm_rate"] = (x2 - x1) / (t2 - t1) / x2 if x2 > 0 else 0.0
    out["scattering_like"] = bool(monotone and out["lp1_decay_ratio"] < 1.0
                                  and out["cauchy_relative"] <= 0.05)
    return out


# --- symmetries -----------------------------------------------------------

def snap_to_lattice(grid: GridSpec, xi) -> np.ndarray:
    """Round each component of xi to the nearest multiple of pi/L."""
    step_k = np.pi / grid.L
    return np.round(np.asarray(xi, dtype=float) / step_k) * step_k


def galilei_boost(psi: Field, xi) -> tuple[Field, np.ndarray]:
    """exp(i x.xi) psi, with xi snapped to the lattice wavenumbers.

    This phase maps solutions to solutions for 2i psi_t + Laplacian psi + ...
    and gives ||grad psi_xi||^2 = |xi|^2 M + ||grad psi||^2 + 2 xi.P.
    Returns the boosted field and the snapped xi.
    """
    grid = psi.grid
    xi = snap_to_lattice(grid, np.broadcast_to(np.asarray(xi, dtype=float), (grid.d,)))
    phase = sum(x * k for x, k in zip(grid.coords, xi))
    return Field(grid, np.exp(1j * phase) * psi.values), xi


def rescale_solution(psi: Field, lam: float, p: float, tol: float = 1e-6) -> Field:
    """lam^{2/(p-1)} psi(lam x) resampled on the same lattice.

    Checks that the L^{d(p-1)/2} norm, which this scaling preserves, is
    reproduced to ``tol``; otherwise raises :class:`ResolutionError`.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    if lam == 1.0:
        return Field(psi.grid, psi.values)
    grid = psi.grid
    pts = lam * grid.x_axis
    vals = evaluate_trig_interpolant(psi, [pts] * grid.d)
    inside = (pts >= -grid.L) & (pts < grid.L)
    for axis in range(grid.d):
        shape = [1] * grid.d
        shape[axis] = grid.n
        vals = vals * inside.reshape(shape)
    out = Field(grid, lam ** (2.0 / (p - 1.0)) * vals)
    q = 0.5 * grid.d * (p - 1.0)
    before, after = lq_norm(psi, q), lq_norm(out, q)
    err = abs(after - before) / before
    if err > tol:
        raise ResolutionError(
            f"rescaling by {lam:g} changed ||.||_{q:g} by {err:.2e} > {tol:.1e}; "
            "the rescaled field is not resolved on this lattice")
    return out
