"""Ground state of  Delta Q - omega Q + |Q|^{p-1} Q = 0  and its constants.

The profile is computed on the full d-dimensional lattice by Petviashvili's
normalized fixed-point iteration; the variational constants N1, N2, N3 and
the well level N2-tilde follow from the converged profile.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .functionals import (
    FunctionalReport,
    evaluate_functionals,
    i_functional,
    n2_functional,
    n2_tilde_functional,
)
from .grid import (
    Field,
    GridSpec,
    ModelParams,
    evaluate_trig_interpolant,
    fft_workers,
    laplacian,
    load_field,
    save_field,
)

log = logging.getLogger(__name__)


class GroundStateError(RuntimeError):
    """The ground-state iteration failed; ``residual`` holds the last value."""

    def __init__(self, message: str, residual: float = float("nan"), history=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history or [])


def n2_tilde_level(params: ModelParams, N2: float) -> float:
    """The number N2-tilde = sqrt((d(p-1)-4)/(d(p-1)))^{(d/2)(p-1)-2} N2."""
    dp = params.dp
    return np.sqrt((dp - 4.0) / dp) ** params.grad_exponent * N2


def n3_over_n2(params: ModelParams) -> float:
    return params.k_coefficient


def n1_from_n2(params: ModelParams, N2: float) -> float:
    """N1 from N2 through the closed relation between the two constants."""
    d, p = params.d, params.p
    c = (d + 2.0) - (d - 2.0) * p
    rhs = (2.0 / d) ** ((p - 1.0) / 2.0) * (d * (p - 1.0) / c) ** (c / 4.0) * N2
    return rhs ** (2.0 / (p - 1.0))


@dataclass
class GroundState:
    params: ModelParams
    profile: Field
    residual: float
    constants: dict
    report: FunctionalReport
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.profile.grid

    @property
    def positive(self) -> bool:
        q = self.profile.values
        return bool(np.all(q.real > 0.0))

    @property
    def k_defect(self) -> float:
        """K(Q) / ||grad Q||^2, zero for the exact ground state."""
        return self.report.k_value / self.report.grad_sq

    def pohozaev_errors(self) -> dict:
        """Relative errors of ||Q||^2 = c1 ||grad Q||^2 = c2 ||Q||_{p+1}^{p+1}."""
        d, p = self.params.d, self.params.p
        c = d + 2.0 - (d - 2.0) * p
        m = self.report.mass
        return {
            "mass_vs_grad": abs(m - c / (d * (p - 1.0)) * self.report.grad_sq) / m,
            "mass_vs_lp1": abs(m - c / (2.0 * (p + 1.0)) * self.report.lp1_norm) / m,
        }

    def summary(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "residual": self.residual,
            "iterations": self.iterations,
            "constants": dict(self.constants),
            "peak": float(np.max(self.profile.values.real)),
            "k_defect": self.k_defect,
            "pohozaev": self.pohozaev_errors(),
            "report": self.report.to_dict(),
        }


def elliptic_residual(profile: Field, params: ModelParams) -> float:
    """||Delta Q - omega Q + |Q|^{p-1} Q||_2 / ||Q||_2 on the lattice."""
    q = profile.values
    res = laplacian(profile).values - params.omega * q + np.abs(q) ** (params.p - 1.0) * q
    return float(np.linalg.norm(res) / np.linalg.norm(q))


def _rfft_setup(grid: GridSpec):
    k = grid.k_axis
    kr = np.abs(k[: grid.n // 2 + 1])
    mesh = np.meshgrid(*([k] * (grid.d - 1)), kr, indexing="ij", sparse=True)
    k2 = sum(kk * kk for kk in mesh)
    weight = np.full(grid.n // 2 + 1, 2.0)
    weight[0] = weight[-1] = 1.0
    return k2, weight


def gaussian_seed(grid: GridSpec, center=None, width: float | None = None) -> np.ndarray:
    width = grid.L / 8.0 if width is None else width
    center = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    r2 = sum((x - c) ** 2 for x, c in zip(grid.coords, center))
    return np.broadcast_to(np.exp(-r2 / (2.0 * width ** 2)), grid.shape).copy()


def compute_constants(params: ModelParams, report: FunctionalReport) -> dict:
    N2 = n2_functional(report, params)
    N3 = i_functional(report, params)
    # N1 is attained by the omega = 1 profile; undo the omega scaling of the norms
    w = params.omega
    mass1 = report.mass * w ** -(2.0 / (params.p - 1.0) - params.d / 2.0)
    grad1 = report.grad_sq * w ** -(2.0 / (params.p - 1.0) + 1.0 - params.d / 2.0)
    N1 = (params.dp - 4.0) / params.dp * grad1 + mass1
    return {"N1": N1, "N2": N2, "N3": N3, "N2_tilde": n2_tilde_level(params, N2)}


def solve_ground_state(params: ModelParams, grid: GridSpec, tol: float = 1e-10,
                       max_iter: int = 2000, seed: np.ndarray | None = None) -> GroundState:
    """Petviashvili iteration  Q <- M^gamma (omega - Delta)^{-1} |Q|^{p-1} Q.

    ``M`` is the stabilizing ratio <(omega - Delta)Q, Q> / <|Q|^{p-1}Q, Q>
    and ``gamma = p/(p-1)``.  Iterates until the relative L2 residual of the
    elliptic equation is at most ``tol``.
    """
    if params.d != grid.d:
        raise ValueError(f"params.d={params.d} does not match grid.d={grid.d}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    p, omega = params.p, params.omega
    gamma = p / (p - 1.0)
    k2, weight = _rfft_setup(grid)
    symbol = omega + k2
    workers = fft_workers()
    q = gaussian_seed(grid) if seed is None else np.array(seed, dtype=float)
    history = []
    residual = np.inf
    for it in range(max_iter + 1):
        qh = sfft.rfftn(q, workers=workers)
        nl = np.abs(q) ** (p - 1.0) * q
        nh = sfft.rfftn(nl, workers=workers)
        qq = np.sum(weight * (qh.real ** 2 + qh.imag ** 2))
        if not qq > 0.0:
            raise GroundStateError("iterate collapsed to zero", 0.0, history)
        rh = nh - symbol * qh
        residual = float(np.sqrt(np.sum(weight * (rh.real ** 2 + rh.imag ** 2)) / qq))
        history.append(residual)
        if not np.isfinite(residual):
            raise GroundStateError("iteration produced non-finite values", residual, history)
        if residual <= tol:
            break
        if it == max_iter:
            raise GroundStateError(
                f"no convergence after {max_iter} iterations (residual {residual:.3e})",
                residual, history)
        denom = np.sum(weight * (qh.real * nh.real + qh.imag * nh.imag))
        if not denom > 0.0 or np.max(np.abs(q)) < 1e-200:
            raise GroundStateError("iterate collapsed to zero", residual, history)
        stab = np.sum(weight * symbol * (qh.real ** 2 + qh.imag ** 2)) / denom
        q = sfft.irfftn(stab ** gamma * nh / symbol, s=grid.shape, workers=workers)
    profile = Field(grid, q)
    report = evaluate_functionals(profile, params)
    gs = GroundState(
        params=params,
        profile=profile,
        residual=elliptic_residual(profile, params),
        constants=compute_constants(params, report),
        report=report,
        iterations=it,
        history=history,
    )
    log.info("ground state d=%d p=%g omega=%g: %d iterations, residual %.2e",
             params.d, p, omega, it, gs.residual)
    return gs


def sample_rescaled(profile: Field, grid: GridSpec, scale: float, amplitude: float) -> Field:
    """amplitude * Q(scale * x) on ``grid``; zero where scale * x leaves Q's cell."""
    src = profile.grid
    pts = scale * grid.x_axis
    vals = evaluate_trig_interpolant(profile, [pts] * grid.d)
    inside = (pts >= -src.L) & (pts < src.L)
    for axis in range(grid.d):
        shape = [1] * grid.d
        shape[axis] = grid.n
        vals = vals * inside.reshape(shape)
    if not np.any(profile.values.imag):
        vals = vals.real
    return Field(grid, amplitude * vals)


def rescale_ground_state(Q1: GroundState, omega: float, grid: GridSpec | None = None,
                         tol: float = 1e-6, const_tol: float = 1e-6) -> GroundState:
    """Ground state at frequency ``omega`` from the omega = 1 profile.

    Uses Q_omega(x) = omega^{1/(p-1)} Q(sqrt(omega) x), the scaling that
    solves the omega-equation by direct substitution.  By default the result
    lives on the lattice of ``Q1`` contracted by sqrt(omega) (same ``n``, box
    half-width L/sqrt(omega)), where the samples map onto each other exactly.
    Passing ``grid`` resamples onto that lattice through the trigonometric
    interpolant instead, with zero outside the original cell.  Either way the
    residual of the omega-equation is re-checked and the scale-invariant
    constants are compared with those of ``Q1``.
    """
    if abs(Q1.params.omega - 1.0) > 1e-14:
        raise ValueError("rescaling starts from the omega = 1 ground state")
    if not omega > 0:
        raise ValueError("omega must be positive")
    params = Q1.params.with_omega(omega)
    if omega == 1.0 and grid is None:
        return GroundState(params, Q1.profile, Q1.residual, dict(Q1.constants), Q1.report,
                           Q1.iterations)
    p = params.p
    amp = omega ** (1.0 / (p - 1.0))
    if grid is None:
        src = Q1.grid
        grid = GridSpec(src.d, src.n, src.L / np.sqrt(omega), src.dealias)
        profile = Field(grid, amp * Q1.profile.values)
    else:
        if grid.d != Q1.grid.d:
            raise ValueError("target grid dimension differs from the ground state's")
        profile = sample_rescaled(Q1.profile, grid, np.sqrt(omega), amp)
    residual = elliptic_residual(profile, params)
    if residual > tol:
        raise GroundStateError(
            f"rescaled profile fails the omega={omega:g} equation: residual {residual:.3e} > {tol:.1e}"
            " (under-resolved at this omega?)", residual)
    report = evaluate_functionals(profile, params)
    constants = compute_constants(params, report)
    for key in ("N2", "N3", "N2_tilde", "N1"):
        rel = abs(constants[key] - Q1.constants[key]) / abs(Q1.constants[key])
        if rel > const_tol:
            raise GroundStateError(
                f"{key} changed by {rel:.2e} under rescaling to omega={omega:g}", residual)
    return GroundState(params, profile, residual, constants, report, 0)


def verify_variational_relations(gs: GroundState) -> dict:
    """Relative errors of the closed relations among N1, N2, N3 and N2-tilde."""
    params, c = gs.params, gs.constants
    d, p = params.d, params.p
    cc = (d + 2.0) - (d - 2.0) * p
    lhs_a = c["N1"] ** ((p - 1.0) / 2.0)
    rhs_a = (2.0 / d) ** ((p - 1.0) / 2.0) * (d * (p - 1.0) / cc) ** (cc / 4.0) * c["N2"]
    rhs_b = params.k_coefficient * c["N2"]
    out = {
        "n1_n2_relation": abs(lhs_a - rhs_a) / abs(rhs_a),
        "n3_n2_relation": abs(c["N3"] - rhs_b) / abs(rhs_b),
        "n3_over_n2": c["N3"] / c["N2"],
        "n2_tilde_over_n2": c["N2_tilde"] / c["N2"],
        "k_defect": gs.k_defect,
    }
    try:
        out["n2_tilde_of_Q"] = abs(n2_tilde_functional(gs.report, params) - c["N2_tilde"]) / c["N2_tilde"]
    except ValueError:
        out["n2_tilde_of_Q"] = float("nan")
    out.update({f"pohozaev_{k}": v for k, v in gs.pohozaev_errors().items()})
    return out


# --- persistence ----------------------------------------------------------

def save_ground_state(gs: GroundState, stem: str | Path) -> tuple[Path, Path]:
    """Write ``stem.bin`` (field format) and ``stem.json`` (sidecar)."""
    stem = Path(stem)
    field_path = save_field(gs.profile, stem.with_suffix(".bin"))
    side = {
        "params": gs.params.to_dict(),
        "grid": gs.grid.to_dict(),
        "residual": gs.residual,
        "iterations": gs.iterations,
        "constants": gs.constants,
    }
    side_path = stem.with_suffix(".json")
    side_path.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return field_path, side_path


def load_ground_state(path: str | Path) -> GroundState:
    """Load from either the ``.bin`` field file or its ``.json`` sidecar."""
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    profile = load_field(path.with_suffix(".bin"))
    pd = side["params"]
    params = ModelParams(int(pd["d"]), float(pd["p"]), float(pd["omega"]))
    report = evaluate_functionals(profile, params)
    return GroundState(params, profile, float(side["residual"]), dict(side["constants"]),
                       report, int(side.get("iterations", 0)))


def cache_key(params: ModelParams, grid: GridSpec, tol: float) -> str:
    raw = json.dumps([params.to_dict(), grid.to_dict(), tol], sort_keys=True)
    return (f"gs_d{params.d}_p{params.p:g}_w{params.omega:g}_n{grid.n}_L{grid.L:g}_"
            + hashlib.sha1(raw.encode()).hexdigest()[:10])


def cached_ground_state(params: ModelParams, grid: GridSpec, tol: float = 1e-10,
                        max_iter: int = 2000, cache_dir: str | Path | None = None) -> GroundState:
    """Solve, or load a previous solve keyed by (d, p, omega, grid, tol)."""
    if cache_dir is None:
        return solve_ground_state(params, grid, tol, max_iter)
    cache_dir = Path(cache_dir)
    stem = cache_dir / cache_key(params, grid, tol)
    if stem.with_suffix(".json").exists() and stem.with_suffix(".bin").exists():
        return load_ground_state(stem)
    gs = solve_ground_state(params, grid, tol, max_iter)
    cache_dir.mkdir(parents=True, exist_ok=True)
    save_ground_state(gs, stem)
    return gs
