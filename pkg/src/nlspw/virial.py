"""Truncated virial weights and the localized virial bookkeeping.

The radial profile w is the identity on [0, 1), bends over on [1, r*) as
r - (r-1)^{d(p-1)/2+1}, decreases smoothly to zero on [r*, 2) and vanishes
beyond.  From it come the vector field  w_R(x) = (x/|x|) R w(|x|/R), the
potential W_R(x) = 2R int_0^{|x|} w(r/R) dr, the densities rho_0..rho_3 of
the truncated virial functional K^R and the fourth-order term
Laplacian(div w_R).
"""
from __future__ import annotations

import csv
import logging
from math import factorial
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import cumulative_trapezoid

from . import kernels
from .functionals import kr_from_values
from .grid import Field, GridMismatchError, GridSpec, ModelParams, fftn, gradient_arrays, ifftn

log = logging.getLogger(__name__)


class WeightConstructionError(RuntimeError):
    """The smooth completion of w failed its monotonicity/regularity checks."""


class LedgerRefused(RuntimeError):
    """The trajectory cannot support the requested identity check."""


# --- the radial profile ---------------------------------------------------

def _hermite_tail(jet, width: float) -> Polynomial:
    """Degree-7 polynomial P on [0, 1] with P^(k)(0) = width^k jet[k] and
    P^(k)(1) = 0 for k = 0..3: a C^3 join from the jet at r* down to zero."""
    head = Polynomial([width ** k * jet[k] / factorial(k) for k in range(4)])
    # P = head + t^4 (c0 + c1 t + c2 t^2 + c3 t^3); impose the conditions at t = 1
    basis = [Polynomial([0.0] * (4 + j) + [1.0]) for j in range(4)]
    A = np.array([[b.deriv(k)(1.0) if k else b(1.0) for b in basis] for k in range(4)])
    rhs = -np.array([head.deriv(k)(1.0) if k else head(1.0) for k in range(4)])
    coef = np.linalg.solve(A, rhs)
    return head + sum(c * b for c, b in zip(coef, basis))


class WeightProfile:
    """The profile w on [0, inf) for a given (d, p), with derivatives 0..3.

    The tail on [r*, 2) is the degree-7 Hermite polynomial matching
    (w, w', w'', w''') at r* and zero at 2, so w is C^3 throughout and
    Laplacian(div w_R) is continuous.  Construction samples the tail
    densely and refuses if w' > 0 anywhere there.
    """

    def __init__(self, params: ModelParams, check_samples: int = 20001):
        self.params = params
        self.power = 0.5 * params.dp + 1.0
        self.r_star = 1.0 + (2.0 / (params.dp + 2.0)) ** (2.0 / params.dp)
        self.width = 2.0 - self.r_star
        e, r0 = self.power, self.r_star
        w0 = r0 - (r0 - 1.0) ** e
        w1 = 1.0 - e * (r0 - 1.0) ** (e - 1.0)
        w2 = -e * (e - 1.0) * (r0 - 1.0) ** (e - 2.0)
        w3 = -e * (e - 1.0) * (e - 2.0) * (r0 - 1.0) ** (e - 3.0)
        dt = self.width
        self.tail = _hermite_tail([w0, w1, w2, w3], dt)  # in t = (r - r*)/width
        self.tail_derivs = [self.tail.deriv(k) / dt ** k if k else self.tail for k in range(4)]
        self.tail_integral = self.tail.integ() * dt
        self._omega_rstar = self._omega_middle(r0)
        self._omega_two = self._omega_rstar + self.tail_integral(1.0)
        self._verify(check_samples)

    # pieces ------------------------------------------------------------
    def _middle(self, r, k):
        e = self.power
        u = np.maximum(r - 1.0, 0.0)
        if k == 0:
            return r - u ** e
        coef = e
        for j in range(1, k):
            coef *= e - j
        base = -coef * u ** (e - k)
        return base + (1.0 if k == 1 else 0.0)

    def _omega_middle(self, r):
        e = self.power
        u = np.maximum(r - 1.0, 0.0)
        return 0.5 * r * r - u ** (e + 1.0) / (e + 1.0)

    def __call__(self, r, deriv: int = 0):
        """w^{(deriv)}(r), elementwise, for r >= 0 and deriv in 0..3."""
        if deriv not in (0, 1, 2, 3):
            raise ValueError("deriv must be 0, 1, 2 or 3")
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inner = r < 1.0
        mid = (r >= 1.0) & (r < self.r_star)
        tail = (r >= self.r_star) & (r < 2.0)
        if deriv == 0:
            out[inner] = r[inner]
        elif deriv == 1:
            out[inner] = 1.0
        out[mid] = self._middle(r[mid], deriv)
        out[tail] = self.tail_derivs[deriv]((r[tail] - self.r_star) / self.width)
        return out

    def antiderivative(self, r):
        """int_0^r w(s) ds."""
        r = np.asarray(r, dtype=float)
        out = np.full_like(r, self._omega_two)
        inner = r < 1.0
        mid = (r >= 1.0) & (r < self.r_star)
        tail = (r >= self.r_star) & (r < 2.0)
        out[inner] = 0.5 * r[inner] ** 2
        out[mid] = self._omega_middle(r[mid])
        out[tail] = self._omega_rstar + self.tail_integral((r[tail] - self.r_star) / self.width)
        return out

    def _verify(self, samples: int) -> None:
        t = np.linspace(0.0, 1.0, samples)
        slope = self.tail_derivs[1](t)
        if np.max(slope) > 1e-12:
            raise WeightConstructionError(
                f"tail of w is not monotone: max w' = {np.max(slope):.3e} on [r*, 2)")
        vals = self.tail(t)
        if np.min(vals) < -1e-12 or np.max(vals) > 2.0:
            raise WeightConstructionError("tail of w leaves [0, 2]")

    @cached_property
    def sup_norms(self) -> tuple[float, float, float, float]:
        """Sampled sup |w^{(k)}| over [0, 2], k = 0..3."""
        r = np.concatenate([np.linspace(0.0, 2.0, 40001), [1.0, self.r_star, np.nextafter(2.0, 0)]])
        return tuple(float(np.max(np.abs(self(r, k)))) for k in range(4))

    @property
    def w3_norm(self) -> float:
        """||w||_{W^{3,inf}} as the sum of the sampled sup norms."""
        return float(sum(self.sup_norms))

    def to_csv(self, path, R: float = 1.0, d: int | None = None, samples: int = 401) -> Path:
        """Dump (r, w, w', rho0..rho3) along a ray, r in units of |x|."""
        d = self.params.d if d is None else d
        r = np.linspace(0.0, 2.5 * R, samples)
        rho = radial_densities(self, r, R, d, self.params.p)
        path = Path(path)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["r", "w", "w_prime", "rho0", "rho1", "rho2", "rho3"])
            for i, ri in enumerate(r):
                wr.writerow([repr(float(ri)), repr(float(self(ri / R))),
                             repr(float(self(ri / R, 1))), *(repr(float(x[i])) for x in rho)])
        return path


def _ratio(profile: WeightProfile, r, R):
    """(R/|x|) w(|x|/R), equal to 1 on |x| < R (removable singularity at 0)."""
    r = np.asarray(r, dtype=float)
    out = np.ones_like(r)
    outer = r >= R
    out[outer] = R * profile(r[outer] / R) / r[outer]
    return out


def radial_densities(profile: WeightProfile, r, R: float, d: int, p: float):
    r = np.asarray(r, dtype=float)
    ratio = _ratio(profile, r, R)
    wp = profile(r / R, 1)
    rho1 = 1.0 - ratio
    rho2 = ratio - wp
    rho3 = (p - 1.0) / (2.0 * (p + 1.0)) * (d - wp - (d - 1) * ratio)
    rho0 = 1.0 - wp
    # inside the ball every density vanishes identically
    inside = r < R
    for rho in (rho0, rho1, rho2, rho3):
        rho[inside] = 0.0
    return rho0, rho1, rho2, rho3


def lap_div_radial(profile: WeightProfile, r, R: float, d: int):
    """Laplacian(div w_R) at radius r, from the closed radial formula."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    outer = r >= R  # w_R(x) = x inside the ball, so the term vanishes there
    ro = r[outer]
    u = ro / R
    c = (d - 1) * (d - 3)
    out[outer] = (profile(u, 3) / R ** 2 + 2.0 * (d - 1) * profile(u, 2) / (R * ro)
                  + c * profile(u, 1) / ro ** 2 - c * R * profile(u) / ro ** 3)
    return out


# --- lattice weights ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VirialWeights:
    R: float
    grid: GridSpec
    params: ModelParams
    profile: WeightProfile = field(repr=False)
    w_samples: np.ndarray = field(repr=False)
    wvec: tuple = field(repr=False)
    W_big: np.ndarray = field(repr=False)
    rho0: np.ndarray = field(repr=False)
    rho1: np.ndarray = field(repr=False)
    rho2: np.ndarray = field(repr=False)
    rho3: np.ndarray = field(repr=False)
    lap_div_wvec: np.ndarray = field(repr=False)
    unit: tuple = field(repr=False)

    def as_field(self, name: str) -> Field:
        return Field(self.grid, getattr(self, name))


def build_weights(grid: GridSpec, params: ModelParams, R: float) -> VirialWeights:
    """Sample w, w_R, W_R, rho_0..rho_3 and Laplacian(div w_R) on ``grid``."""
    if params.d != grid.d:
        raise ValueError("params and grid have different dimensions")
    if not R > 0:
        raise ValueError("R must be positive")
    if not 2.0 * R < grid.L:
        raise ValueError(f"weights need 2R < L (R={R}, L={grid.L})")
    prof = WeightProfile(params)
    d = grid.d
    r = np.broadcast_to(grid.r, grid.shape)
    safe = np.where(r > 0.0, r, 1.0)
    unit = tuple(np.where(r > 0.0, np.broadcast_to(x, grid.shape) / safe, 0.0) for x in grid.coords)
    w_s = prof(r / R)
    wvec = tuple(R * w_s * u for u in unit)
    W_big = 2.0 * R * R * prof.antiderivative(r / R)
    rho0, rho1, rho2, rho3 = radial_densities(prof, r, R, d, params.p)
    lapdiv = lap_div_radial(prof, r, R, d)
    return VirialWeights(R, grid, params, prof, w_s, wvec, W_big, rho0, rho1, rho2, rho3,
                         lapdiv, unit)


def _gradient_matrix_norms(weights: VirialWeights) -> np.ndarray:
    """max_j |grad w_R^j(x)| from the closed-form Jacobian."""
    prof, R = weights.profile, weights.R
    r = np.broadcast_to(weights.grid.r, weights.grid.shape)
    ratio = _ratio(prof, r, R)
    wp = prof(r / R, 1)
    best = np.zeros(weights.grid.shape)
    for j, uj in enumerate(weights.unit):
        sq = np.zeros(weights.grid.shape)
        for k, uk in enumerate(weights.unit):
            # d_k w^j = (delta_jk - u_j u_k) ratio + u_j u_k w'
            djk = (float(j == k) - uj * uk) * ratio + uj * uk * wp
            sq += djk * djk
        best = np.maximum(best, np.sqrt(sq))
    return best


def weight_bounds_certificate(weights: VirialWeights, rtol: float = 1e-12) -> dict:
    """Pointwise checks of the five bounds on w_R, W_R and their derivatives."""
    d, R = weights.grid.d, weights.R
    kbar = weights.profile.w3_norm
    wsq = sum(c * c for c in weights.wvec)
    vec_sup = float(np.sqrt(np.max(wsq)))
    W_sup = float(np.max(np.abs(weights.W_big)))
    grad_sup = float(np.max(_gradient_matrix_norms(weights)))
    lap_sup = float(np.max(np.abs(weights.lap_div_wvec)))
    slack = rtol * (1.0 + np.abs(weights.W_big))
    out = {
        "K_w3inf": kbar,
        "vec_sq_le_W": bool(np.all(wsq <= weights.W_big + slack)),
        "vec_sup": vec_sup,
        "vec_sup_le_2R": vec_sup <= 2.0 * R * (1 + rtol),
        "W_sup": W_sup,
        "W_sup_le_8R2": W_sup <= 8.0 * R * R * (1 + rtol),
        "grad_sup": grad_sup,
        "grad_sup_le_2dK": grad_sup <= 2.0 * d * kbar,
        "lapdiv_sup": lap_sup,
        "lapdiv_sup_le_10d2K_R2": lap_sup <= 10.0 * d * d * kbar / R ** 2,
    }
    out["all_pass"] = all(v for k, v in out.items() if isinstance(v, bool))
    return out


def density_certificate(weights: VirialWeights, atol: float = 1e-12,
                         rho3_floor: float = 1e-10) -> dict:
    """Support, sign, plateau and rho0/rho3 checks for the densities."""
    grid, R, params = weights.grid, weights.R, weights.params
    r = np.broadcast_to(grid.r, grid.shape)
    inside = r < R
    far = r >= 2.0 * R
    rhos = [weights.rho0, weights.rho1, weights.rho2, weights.rho3]
    plateau = params.k_coefficient
    out = {
        "nonnegative": all(bool(np.min(rho) >= -atol) for rho in rhos),
        "vanish_inside": all(bool(np.all(rho[inside] == 0.0)) for rho in rhos),
        "rho0_is_one_far": bool(np.all(np.abs(weights.rho0[far] - 1.0) <= atol)),
        "rho3_plateau_far": bool(np.all(np.abs(weights.rho3[far] - plateau) <= atol)),
        "rho0_equals_rho1_plus_rho2": bool(np.max(np.abs(weights.rho0 - weights.rho1 - weights.rho2)) <= atol),
    }
    sel = (~inside) & (weights.rho3 > rho3_floor)
    k4 = float(np.min(weights.rho0[sel] / weights.rho3[sel])) if np.any(sel) else float("nan")
    out["K4"] = k4
    out["K4_positive"] = bool(k4 > 0.0)
    out["sup_rho"] = [float(np.max(rho)) for rho in rhos]
    out["all_pass"] = all(v for v in out.values() if isinstance(v, bool))
    return out


def profile_monotone_on_samples(weights: VirialWeights) -> bool:
    """w' <= 0 at every lattice sample whose radius falls in the tail."""
    prof = weights.profile
    u = np.broadcast_to(weights.grid.r, weights.grid.shape) / weights.R
    sel = (u >= prof.r_star) & (u < 2.0)
    return bool(np.all(prof(u[sel], 1) <= 1e-14))


# --- monitors -------------------------------------------------------------

def virial_terms(values: np.ndarray, grid: GridSpec, weights: VirialWeights,
                 grads=None, nonlinear: bool = True) -> dict:
    """(W_R,|psi|^2), Im(w_R.grad psi, psi), K^R and (Lap div w_R, |psi|^2)."""
    if grads is None:
        grads = gradient_arrays(values, grid)
    vol = grid.cell_volume
    dens = np.ascontiguousarray((values.real ** 2 + values.imag ** 2))
    flux = sum(wj * g for wj, g in zip(weights.wvec, grads))
    params = weights.params
    if nonlinear:
        kr = kr_from_values(values, grid, params, weights, grads=grads)
    else:
        grad_abs2 = sum(g.real ** 2 + g.imag ** 2 for g in grads)
        radial = sum(u * g for u, g in zip(weights.unit, grads))
        kr = float(np.sum(weights.rho1 * grad_abs2
                          + weights.rho2 * (radial.real ** 2 + radial.imag ** 2)) * vol)
    return {
        "virial_W": kernels.weighted_abs2_sum(values, weights.W_big) * vol,
        "virial_flux": float(np.sum((flux * np.conj(values)).imag) * vol),
        "virial_KR": kr,
        "virial_lapdiv": float(np.sum(weights.lap_div_wvec * dens) * vol),
    }


def variance_terms(values: np.ndarray, grid: GridSpec, grads=None) -> dict:
    """int |x|^2 |psi|^2 and Im int (x . grad psi) conj(psi) on the cell."""
    if grads is None:
        grads = gradient_arrays(values, grid)
    r2 = np.broadcast_to(grid.r ** 2, grid.shape)
    vol = grid.cell_volume
    flux = sum(x * g for x, g in zip(grid.coords, grads))
    return {
        "variance": kernels.weighted_abs2_sum(values, np.ascontiguousarray(r2)) * vol,
        "variance_flux": float(np.sum((flux * np.conj(values)).imag) * vol),
    }


def virial_monitor(weights: VirialWeights):
    """Monitor for :func:`nlspw.evolution.evolve` recording the virial terms."""
    def monitor(values, grid, grads, nonlinear):
        if grid != weights.grid:
            raise GridMismatchError("virial weights built on another grid")
        return virial_terms(values, grid, weights, grads=grads, nonlinear=nonlinear)
    monitor.keys = ("virial_W", "virial_flux", "virial_KR", "virial_lapdiv")
    return monitor


def variance_monitor():
    def monitor(values, grid, grads, nonlinear):
        return variance_terms(values, grid, grads=grads)
    monitor.keys = ("variance", "variance_flux")
    return monitor


# --- ledgers --------------------------------------------------------------

def _double_integral(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    inner = cumulative_trapezoid(f, t, initial=0.0)
    return cumulative_trapezoid(inner, t, initial=0.0)


@dataclass
class VirialLedger:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray  # |lhs - rhs| / scale
    scale: float
    quadrature_error: float
    max_residual: float
    kind: str = "generalized"

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "LHS", "RHS", "residual"])
            for row in zip(self.times, self.lhs, self.rhs, self.residual):
                w.writerow([repr(float(x)) for x in row])
        return path

    def summary(self) -> dict:
        return {"kind": self.kind, "max_residual": self.max_residual, "scale": self.scale,
                "quadrature_error": self.quadrature_error, "samples": int(self.times.size)}


def _series_from_snapshots(tr, fn):
    rows = [fn(f.values, f.grid) for _, f in tr.snapshots]
    times = np.array([t for t, _ in tr.snapshots])
    keys = rows[0].keys()
    return times, {k: np.array([r[k] for r in rows]) for k in keys}


def _ledger(times, lhs, v0, forcing, max_rel_quad_error, kind):
    t = np.asarray(times, dtype=float)
    if t.size < 3:
        raise LedgerRefused("need at least three time samples")
    if np.any(np.diff(t) <= 0):
        raise LedgerRefused("times must be strictly increasing")
    t_rel = t - t[0]
    rhs = lhs[0] + 2.0 * t_rel * v0 + _double_integral(t_rel, forcing)
    scale = float(np.max(np.abs(lhs)))
    if scale == 0.0:
        raise LedgerRefused("identity is trivial: the weighted mass vanishes")
    # quadrature error: compare with the same rule on every other sample
    coarse_t = t_rel[::2]
    coarse = _double_integral(coarse_t, forcing[::2])
    fine = _double_integral(t_rel, forcing)[::2]
    quad_err = float(np.max(np.abs(fine - coarse)) / 3.0 / scale)
    if quad_err > max_rel_quad_error:
        raise LedgerRefused(
            f"snapshots too sparse: estimated quadrature error {quad_err:.2e} > {max_rel_quad_error:.1e}")
    resid = np.abs(lhs - rhs) / scale
    return VirialLedger(t, np.asarray(lhs), rhs, resid, scale, quad_err, float(np.max(resid)), kind)


def virial_ledger(tr, weights: VirialWeights, max_rel_quad_error: float = 1e-2) -> VirialLedger:
    """Check the localized virial identity along a recorded trajectory.

    LHS (W_R, |psi(t)|^2); RHS  (W_R, |psi_0|^2) + 2t Im(w_R.grad psi_0, psi_0)
    + double time integral of 2K - 2K^R - (1/2)(Lap div w_R, |psi|^2),
    with cumulative trapezoid quadrature.  Uses the monitored series when
    the trajectory carries them, the stored snapshots otherwise.
    """
    nonlinear = getattr(tr, "nonlinear", True)
    if all(k in tr.series for k in ("virial_W", "virial_flux", "virial_KR", "virial_lapdiv")):
        times = np.asarray(tr.times)
        s = {k: np.asarray(tr.series[k]) for k in ("virial_W", "virial_flux", "virial_KR",
                                                  "virial_lapdiv")}
        kval = np.asarray(tr.series["K"] if nonlinear else tr.series["grad_sq"])
    else:
        if len(tr.snapshots) < 3:
            raise LedgerRefused("no virial series recorded and fewer than three snapshots")
        if tr.snapshots[0][1].grid != weights.grid:
            raise GridMismatchError("weights and trajectory live on different grids")
        times, s = _series_from_snapshots(
            tr, lambda v, g: virial_terms(v, g, weights, nonlinear=nonlinear))
        from .functionals import report_from_values
        reps = [report_from_values(f.values, f.grid, weights.params) for _, f in tr.snapshots]
        kval = np.array([r.k_value if nonlinear else r.grad_sq for r in reps])
    forcing = 2.0 * kval - 2.0 * s["virial_KR"] - 0.5 * s["virial_lapdiv"]
    return _ledger(times, s["virial_W"], s["virial_flux"][0], forcing, max_rel_quad_error,
                   "generalized")


def classical_virial_check(tr, boundary_cap: float | None = None,
                           max_rel_quad_error: float = 1e-2) -> VirialLedger:
    """int |x|^2|psi(t)|^2 = V_0 + 2t Im int x.grad psi_0 conj(psi_0) + 2 double-int K.

    |x|^2 is evaluated on the fundamental cell, so mass reaching the box
    edge invalidates the check; such trajectories are refused.
    """
    from .evolution import Termination

    if tr.termination is Termination.BOUNDARY_CONTAMINATION:
        raise LedgerRefused("trajectory hit the boundary-contamination monitor")
    if boundary_cap is not None and "boundary_mass" in tr.series:
        if np.max(tr.series["boundary_mass"]) > boundary_cap:
            raise LedgerRefused("boundary shell mass above cap")
    nonlinear = getattr(tr, "nonlinear", True)
    if "variance" in tr.series:
        times = np.asarray(tr.times)
        var = np.asarray(tr.series["variance"])
        flux0 = tr.series["variance_flux"][0]
        kval = np.asarray(tr.series["K"] if nonlinear else tr.series["grad_sq"])
    else:
        if len(tr.snapshots) < 3:
            raise LedgerRefused("no variance series recorded and fewer than three snapshots")
        times, s = _series_from_snapshots(tr, lambda v, g: variance_terms(v, g))
        var, flux0 = s["variance"], s["variance_flux"][0]
        from .functionals import report_from_values
        reps = [report_from_values(f.values, f.grid, tr.params) for _, f in tr.snapshots]
        kval = np.array([r.k_value if nonlinear else r.grad_sq for r in reps])
    return _ledger(times, var, flux0, 2.0 * kval, max_rel_quad_error, "classical")


# --- localization diagnostics ---------------------------------------------

def center_of_mass(psi: Field, weights: VirialWeights) -> np.ndarray:
    """(w_R, |psi|^2) component-wise; build ``weights`` at the 20R scale."""
    if psi.grid != weights.grid:
        raise GridMismatchError("weights and field live on different grids")
    dens = psi.values.real ** 2 + psi.values.imag ** 2
    vol = psi.grid.cell_volume
    return np.array([float(np.sum(c * dens) * vol) for c in weights.wvec])


def lattice_ball(grid: GridSpec, R: float) -> np.ndarray:
    """Indicator of {|z| <= R} on the periodic lattice, centred at index 0."""
    idx = np.fft.fftfreq(grid.n, d=1.0 / grid.n) * grid.h  # signed minimal offsets
    mesh = np.meshgrid(*([idx] * grid.d), indexing="ij", sparse=True)
    dist2 = sum(m * m for m in mesh)
    return (dist2 <= R * R * (1.0 + 1e-12)).astype(float)


def concentration_scan(psi: Field, radii) -> list[dict]:
    """Largest mass inside a lattice-centred ball, for each radius.

    For each R the sum over {|x - y| <= R} of |psi|^2 h^d is evaluated for
    every lattice centre y at once (circular FFT correlation with the ball
    indicator, distances taken on the torus) and maximized.
    """
    grid = psi.grid
    dens = psi.values.real ** 2 + psi.values.imag ** 2
    total = float(np.sum(dens) * grid.cell_volume)
    dh = fftn(dens)
    out = []
    for R in radii:
        R = float(R)
        if not R > 0:
            raise ValueError("radii must be positive")
        ball = lattice_ball(grid, R)
        # the ball is symmetric, so correlation equals convolution
        mass = ifftn(dh * fftn(ball)).real * grid.cell_volume
        j = int(np.argmax(mass))
        best = float(mass.flat[j])
        out.append({
            "R": R,
            "sup_mass": best,
            "fraction": best / total if total > 0 else 0.0,
            "center": [float(grid.x_axis[i]) for i in np.unravel_index(j, grid.shape)],
            "ball_sites": int(ball.sum()),
        })
    return out
