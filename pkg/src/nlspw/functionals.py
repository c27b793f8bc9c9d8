"""Scalar functionals on H1 data and their lattice analogues.

Mass, Hamiltonian, momentum and the virial functional K, the scale
invariant quotients N2, N2-tilde and I, the well threshold B, the truncated
virial functional K^R, and the Strichartz exponent bookkeeping.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import kernels
from .grid import (
    Field,
    GridSpec,
    ModelParams,
    NonFiniteFieldError,
    fftn,
    grad_norm_sq_from_spectrum,
    ifftn,
)


class FunctionalDomainError(ValueError):
    """A functional was evaluated outside its domain of definition."""


@dataclass(frozen=True)
class FunctionalReport:
    mass: float
    hamiltonian: float
    momentum: tuple[float, ...]
    k_value: float
    lp1_norm: float
    grad_sq: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["momentum"] = list(self.momentum)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def lp1_integral(values: np.ndarray, grid: GridSpec, p: float) -> float:
    """||f||_{p+1}^{p+1} by lattice quadrature.

    With ``grid.dealias`` the integrand is evaluated on a 3/2 zero-padded
    lattice carrying the trigonometric interpolant of ``values``.
    """
    if grid.dealias:
        padded, vol = _zero_pad(values, grid)
        return kernels.abs_pow_sum(padded, p + 1.0) * vol
    return kernels.abs_pow_sum(np.ascontiguousarray(values), p + 1.0) * grid.cell_volume


def _zero_pad(values: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, float]:
    n = grid.n
    m = 3 * n // 2
    fh = np.fft.fftshift(fftn(values))
    lo = (m - n) // 2
    big = np.zeros((m,) * grid.d, dtype=complex)
    big[(slice(lo, lo + n),) * grid.d] = fh
    padded = ifftn(np.fft.ifftshift(big)) * (m / n) ** grid.d
    return np.ascontiguousarray(padded), (2.0 * grid.L / m) ** grid.d


def _momentum(values: np.ndarray, fh: np.ndarray, grid: GridSpec) -> tuple[float, ...]:
    if not np.any(values.imag):
        return (0.0,) * grid.d
    power = fh.real ** 2 + fh.imag ** 2
    scale = grid.cell_volume / grid.size
    return tuple(float(np.sum(k * power) * scale) for k in grid.wavenumbers)


def evaluate_functionals(f: Field, params: ModelParams) -> FunctionalReport:
    """Mass, Hamiltonian, momentum, K, ||f||_{p+1}^{p+1} and ||grad f||^2."""
    if not f.is_finite:
        raise NonFiniteFieldError("cannot evaluate functionals of a field with NaN/Inf samples")
    return report_from_values(f.values, f.grid, params)


def report_from_values(values: np.ndarray, grid: GridSpec, params: ModelParams,
                       fh: np.ndarray | None = None) -> FunctionalReport:
    if fh is None:
        fh = fftn(values)
    mass = float(np.vdot(values, values).real * grid.cell_volume)
    grad_sq = grad_norm_sq_from_spectrum(fh, grid)
    lp1 = lp1_integral(values, grid, params.p)
    p = params.p
    return FunctionalReport(
        mass=mass,
        hamiltonian=grad_sq - 2.0 / (p + 1.0) * lp1,
        momentum=_momentum(values, fh, grid),
        k_value=grad_sq - params.k_coefficient * lp1,
        lp1_norm=lp1,
        grad_sq=grad_sq,
    )


def _nonzero(report: FunctionalReport, what: str) -> None:
    if report.mass <= 0.0:
        raise FunctionalDomainError(f"{what} is undefined for the zero field")


def _as_report(f, params: ModelParams) -> FunctionalReport:
    return f if isinstance(f, FunctionalReport) else evaluate_functionals(f, params)


def n2_functional(f: Field | FunctionalReport, params: ModelParams) -> float:
    """||f||_2^{p+1-(d/2)(p-1)} ||grad f||_2^{(d/2)(p-1)-2}."""
    rep = _as_report(f, params)
    _nonzero(rep, "N2")
    return rep.mass ** (0.5 * params.mass_exponent) * rep.grad_sq ** (0.5 * params.grad_exponent)


def n2_tilde_functional(f: Field | FunctionalReport, params: ModelParams) -> float:
    """N2 with ||grad f||^2 replaced by H(f); requires H(f) >= 0."""
    rep = _as_report(f, params)
    _nonzero(rep, "N2-tilde")
    if rep.hamiltonian < 0.0:
        raise FunctionalDomainError(
            f"N2-tilde needs H(f) >= 0, got H = {rep.hamiltonian:.6g}"
        )
    return rep.mass ** (0.5 * params.mass_exponent) * rep.hamiltonian ** (0.5 * params.grad_exponent)


def b_from_mass(mass: float, params: ModelParams, N2: float) -> float:
    """Well threshold B as a function of the mass ||f||_2^2."""
    if mass <= 0.0:
        raise FunctionalDomainError("B is undefined for the zero field")
    if not N2 > 0.0:
        raise FunctionalDomainError(f"N2 must be positive, got {N2}")
    dp = params.dp
    return (dp - 4.0) / dp * (N2 / mass ** (0.5 * params.mass_exponent)) ** (4.0 / (dp - 4.0))


def b_threshold(f: Field | FunctionalReport, params: ModelParams, N2: float) -> float:
    rep = _as_report(f, params)
    return b_from_mass(rep.mass, params, N2)


def i_functional(f: Field | FunctionalReport, params: ModelParams) -> float:
    """Gagliardo-Nirenberg quotient ||f||_2^a ||grad f||_2^b / ||f||_{p+1}^{p+1}."""
    rep = _as_report(f, params)
    _nonzero(rep, "I")
    if rep.lp1_norm <= 0.0:
        raise FunctionalDomainError("I is undefined when ||f||_{p+1} = 0")
    num = rep.mass ** (0.5 * params.mass_exponent) * rep.grad_sq ** (0.25 * params.dp)
    return num / rep.lp1_norm


def kr_functional(f: Field, params: ModelParams, weights, radial: bool = False) -> float:
    """Truncated virial functional K^R.

    ``weights`` is a :class:`nlspw.virial.VirialWeights` built on the same
    grid.  With ``radial=True`` the shortcut
    ``int rho0 |grad f|^2 - rho3 |f|^{p+1}`` is used, valid for d = 1 or
    radial data.
    """
    if weights.grid != f.grid:
        from .grid import GridMismatchError
        raise GridMismatchError("weights and field live on different grids")
    return kr_from_values(f.values, f.grid, params, weights, radial=radial)


def kr_from_values(values, grid, params, weights, radial=False, grads=None) -> float:
    if grads is None:
        fh = fftn(values)
        grads = [ifftn(1j * k * fh) for k in grid.wavenumbers]
    grad_abs2 = sum(g.real ** 2 + g.imag ** 2 for g in grads)
    pot = np.abs(values) ** (params.p + 1.0)
    if radial:
        integrand = weights.rho0 * grad_abs2 - weights.rho3 * pot
    else:
        radial_deriv = sum(u * g for u, g in zip(weights.unit, grads))
        integrand = (weights.rho1 * grad_abs2
                     + weights.rho2 * (radial_deriv.real ** 2 + radial_deriv.imag ** 2)
                     - weights.rho3 * pot)
    return float(np.sum(integrand) * grid.cell_volume)


# --- Strichartz exponents -------------------------------------------------

@dataclass(frozen=True)
class ExponentSet:
    s_p: float
    q1: float
    r0: float
    r1: float
    r1_tilde: float
    q2: float
    r2: float

    def to_dict(self) -> dict:
        return asdict(self)


def exponent_set(params: ModelParams, q1: float, strict: bool = True) -> ExponentSet:
    """Exponents of the X(I) and S(I) spaces for a chosen ``q1``.

    ``strict`` enforces ``p + 1 < q1 < 2*``.  ``strict=False`` evaluates the
    defining formulas at any ``q1`` for which they are finite.
    """
    d, p, s = params.d, params.p, params.s_p
    if strict and not (p + 1.0 < q1 < params.critical_sobolev):
        raise FunctionalDomainError(
            f"q1 = {q1} must satisfy p+1 = {p + 1:g} < q1 < 2* = {params.critical_sobolev:g}"
        )
    inv_r0 = 0.5 * d * (0.5 - 1.0 / q1)
    inv_r1 = 0.5 * d * (0.5 - 1.0 / q1 - s / d)
    inv_r1t = 0.5 * d * (0.5 - 1.0 / q1 + s / d)
    q2 = (p - 1.0) / (1.0 - 2.0 / q1)
    inv_r2 = 0.5 * d * (0.5 - 1.0 / q2 - s / d)
    return ExponentSet(s_p=s, q1=q1, r0=1.0 / inv_r0, r1=1.0 / inv_r1,
                       r1_tilde=1.0 / inv_r1t, q2=q2, r2=1.0 / inv_r2)


def windowed_norm(times: Sequence[float], space_norms: Sequence[float], r: float) -> float:
    """L^r in time (trapezoid of ||psi(t)||^r) of a sampled norm series."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(space_norms, dtype=float)
    if t.size == 0:
        raise ValueError("empty trajectory")
    if np.isinf(r):
        return float(np.max(v))
    if t.size == 1:
        return 0.0
    return float(trapezoid(v ** r, t) ** (1.0 / r))


def spacetime_norms(trajectory: Iterable[tuple[float, Field]], exps: ExponentSet) -> dict:
    """Discrete windowed X- and S-norms over a sampled trajectory.

    X(I) = L^{r1}L^{q1} cap L^{r2}L^{q2},  S(I) = L^inf L^2 cap L^{r0}L^{q1};
    the intersection norms are reported as the max of their components.
    """
    from .grid import lq_norm

    traj = list(trajectory)
    if not traj:
        raise ValueError("empty trajectory")
    times = [t for t, _ in traj]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("trajectory must be time-sorted")
    nq1 = [lq_norm(f, exps.q1) for _, f in traj]
    nq2 = [lq_norm(f, exps.q2) for _, f in traj]
    n2 = [lq_norm(f, 2.0) for _, f in traj]
    x1 = windowed_norm(times, nq1, exps.r1)
    x2 = windowed_norm(times, nq2, exps.r2)
    s_inf = windowed_norm(times, n2, np.inf)
    s0 = windowed_norm(times, nq1, exps.r0)
    return {
        "window": (times[0], times[-1]),
        "X_r1_q1": x1,
        "X_r2_q2": x2,
        "X": max(x1, x2),
        "S_inf_2": s_inf,
        "S_r0_q1": s0,
        "S": max(s_inf, s0),
    }


def write_reports_csv(path, rows: Sequence[tuple[float, FunctionalReport]]) -> None:
    """CSV export (t, M, H, P_1..P_d, K, Lp1, grad_sq) of a report scan."""
    rows = list(rows)
    d = len(rows[0][1].momentum) if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "M", "H", *[f"P{j}" for j in range(d)], "K", "Lp1", "grad_sq"])
        for t, r in rows:
            w.writerow([repr(t), repr(r.mass), repr(r.hamiltonian), *map(repr, r.momentum),
                        repr(r.k_value), repr(r.lp1_norm), repr(r.grad_sq)])
