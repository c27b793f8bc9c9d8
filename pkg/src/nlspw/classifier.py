"""Potential-well membership and the ground-state path s -> sQ.

PW is {H(f) < B(f)}; its two components PW+ and PW- are split by the sign
of K.  Omega is the smaller set {N2(f) < N2-tilde}.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .functionals import (
    FunctionalDomainError,
    FunctionalReport,
    b_from_mass,
    evaluate_functionals,
    n2_functional,
    n2_tilde_functional,
)
from .grid import Field, GridSpec, h1_norm

BASE_SLACK = 1e-8


class Membership(str, Enum):
    PW_PLUS = "PW_PLUS"
    PW_MINUS = "PW_MINUS"
    ON_K_ZERO_BOUNDARY = "ON_K_ZERO_BOUNDARY"
    OUTSIDE_PW = "OUTSIDE_PW"


@dataclass(frozen=True)
class PWVerdict:
    report: FunctionalReport
    b_value: float
    n2: float
    n2_tilde: float | None  # None where H < 0
    membership: Membership
    omega_flag: bool
    kappa: float

    @property
    def in_pw(self) -> bool:
        return self.report.hamiltonian < self.b_value

    @property
    def k_ratio(self) -> float:
        return self.report.k_value / self.report.grad_sq

    def to_dict(self) -> dict:
        return {
            "membership": self.membership.value,
            "H": self.report.hamiltonian,
            "K": self.report.k_value,
            "B": self.b_value,
            "N2": self.n2,
            "N2_tilde": self.n2_tilde,
            "in_PW": self.in_pw,
            "omega_flag": self.omega_flag,
            "kappa": self.kappa,
            "report": self.report.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def default_slack(gs) -> float:
    """Width of the K = 0 band, relative to ||grad f||^2.

    At least ``BASE_SLACK``; widened to twice the lattice ground state's own
    |K(Q)|/||grad Q||^2 so that Q itself always falls inside the band.
    """
    return max(BASE_SLACK, 2.0 * abs(gs.k_defect))


def classify_report(rep: FunctionalReport, gs, kappa: float | None = None) -> PWVerdict:
    params = gs.params
    if rep.mass <= 0.0:
        raise FunctionalDomainError("cannot classify the zero field")
    kappa = default_slack(gs) if kappa is None else kappa
    N2 = gs.constants["N2"]
    b = b_from_mass(rep.mass, params, N2)
    n2 = n2_functional(rep, params)
    n2t = n2_tilde_functional(rep, params) if rep.hamiltonian >= 0.0 else None
    band = kappa * rep.grad_sq
    if abs(rep.k_value) <= band:
        membership = Membership.ON_K_ZERO_BOUNDARY
    elif rep.hamiltonian >= b:
        membership = Membership.OUTSIDE_PW
    elif rep.k_value > band:
        membership = Membership.PW_PLUS
    else:
        membership = Membership.PW_MINUS
    return PWVerdict(rep, b, n2, n2t, membership, bool(n2 < gs.constants["N2_tilde"]), kappa)


def classify(f: Field, gs, kappa: float | None = None) -> PWVerdict:
    """Membership of ``f`` in PW+, PW-, the K = 0 band, or outside PW."""
    if f.grid.d != gs.params.d:
        raise ValueError("field and ground state have different dimensions")
    return classify_report(evaluate_functionals(f, gs.params), gs, kappa)


# --- the path s -> sQ ------------------------------------------------------

def path_hamiltonian(gs, s: float) -> float:
    """Closed form H(sQ) = s^2 (1 - 4 s^{p-1}/(d(p-1))) ||grad Q||^2."""
    p, dp = gs.params.p, gs.params.dp
    return s * s * (1.0 - 4.0 / dp * s ** (p - 1.0)) * gs.report.grad_sq


def path_n2_tilde(gs, s: float) -> float:
    """Closed form of N2-tilde(sQ); defined while H(sQ) >= 0."""
    p, d, dp = gs.params.p, gs.params.d, gs.params.dp
    base = 1.0 - 4.0 / dp * s ** (p - 1.0)
    if base < 0.0:
        raise FunctionalDomainError(f"H(sQ) < 0 at s = {s}")
    return s ** (p - 1.0) * base ** (0.25 * d * (p - 1.0) - 1.0) * gs.constants["N2"]


def zero_energy_scale(params) -> float:
    """The s > 0 where H(sQ) = 0: (d(p-1)/4)^{1/(p-1)}."""
    return (params.dp / 4.0) ** (1.0 / (params.p - 1.0))


@dataclass(frozen=True)
class PathPoint:
    s: float
    verdict: PWVerdict
    H: float
    n2_tilde: float | None
    H_closed: float
    n2_tilde_closed: float | None
    H_error: float  # |H - H_closed| / (s^2 ||grad Q||^2)
    n2_tilde_error: float | None

    @property
    def membership(self) -> Membership:
        return self.verdict.membership


def path_scan(gs, s_values, kappa: float | None = None) -> list[PathPoint]:
    """Classify sQ for each s and cross-check H and N2-tilde with closed forms.

    The H discrepancy is normalized by s^2 ||grad Q||^2, the scale of the
    two terms that cancel at the zero-energy crossing.
    """
    out = []
    q = gs.profile
    for s in s_values:
        s = float(s)
        if not s > 0:
            raise ValueError("path parameters must be positive")
        v = classify(q * s, gs, kappa)
        H = v.report.hamiltonian
        Hc = path_hamiltonian(gs, s)
        err = abs(H - Hc) / (s * s * gs.report.grad_sq)
        n2tc = n2t_err = None
        if Hc >= 0.0 and v.n2_tilde is not None:
            n2tc = path_n2_tilde(gs, s)
            n2t_err = abs(v.n2_tilde - n2tc) / n2tc if n2tc > 0 else abs(v.n2_tilde)
        out.append(PathPoint(s, v, H, v.n2_tilde, Hc, n2tc, err, n2t_err))
    return out


def write_path_csv(path, points) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "H", "K", "N2_tilde", "membership"])
        for pt in points:
            w.writerow([repr(pt.s), repr(pt.H), repr(pt.verdict.report.k_value),
                        "" if pt.n2_tilde is None else repr(pt.n2_tilde), pt.membership.value])
    return path


def write_verdicts_json(path, verdicts) -> Path:
    path = Path(path)
    rows = [v.to_dict() for v in verdicts]
    path.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return path


# --- instability directions -----------------------------------------------

@dataclass(frozen=True)
class InstabilityPair:
    eps: float
    f_plus: Field
    f_minus: Field
    verdict_plus: PWVerdict
    verdict_minus: PWVerdict
    dist_plus: float
    dist_minus: float

    @property
    def determinate(self) -> bool:
        """True when the signs resolved to (PW_PLUS, PW_MINUS)."""
        return (self.verdict_plus.membership is Membership.PW_PLUS
                and self.verdict_minus.membership is Membership.PW_MINUS)

    @property
    def fields(self) -> tuple[Field, Field]:
        return self.f_plus, self.f_minus

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "determinate": self.determinate,
            "plus": self.verdict_plus.membership.value,
            "minus": self.verdict_minus.membership.value,
            "dist_plus": self.dist_plus,
            "dist_minus": self.dist_minus,
        }


def instability_pair(gs, eps: float, kappa: float | None = None) -> InstabilityPair:
    """f_{+/-} = (1 -/+ eps/||Q||_{H1}) Q, at H1 distance eps from Q.

    If the K-slack band swallows either sign the pair is returned with
    ``determinate == False`` rather than with a forced verdict.
    """
    q = gs.profile
    qn = h1_norm(q)
    if not 0.0 < eps < qn:
        raise ValueError(f"eps must lie in (0, ||Q||_H1 = {qn:.6g}), got {eps}")
    f_plus = q * (1.0 - eps / qn)
    f_minus = q * (1.0 + eps / qn)
    return InstabilityPair(
        eps=eps,
        f_plus=f_plus,
        f_minus=f_minus,
        verdict_plus=classify(f_plus, gs, kappa),
        verdict_minus=classify(f_minus, gs, kappa),
        dist_plus=h1_norm(q - f_plus),
        dist_minus=h1_norm(q - f_minus),
    )


# --- foliation of PW+ by N2-tilde level and mass ---------------------------

def _lattice_path_n2_tilde(gs, s: float) -> float:
    """N2-tilde(sQ) from the lattice norms of Q (exact for the sampled field)."""
    params, rep = gs.params, gs.report
    H = s * s * rep.grad_sq - 2.0 / (params.p + 1.0) * s ** (params.p + 1.0) * rep.lp1_norm
    if H < 0.0:
        return -np.inf
    return (s * s * rep.mass) ** (0.5 * params.mass_exponent) * H ** (0.5 * params.grad_exponent)


def path_scale_for_level(gs, eta: float) -> float:
    """The s in (0, 1] with N2-tilde(sQ) = eta, solved on the lattice values."""
    top = gs.constants["N2_tilde"]
    if not 0.0 < eta < top:
        raise ValueError(f"eta must lie in (0, {top:.6g})")
    # N2-tilde(sQ) increases up to (about) s = 1; locate the lattice maximum
    res = minimize_scalar(lambda s: -_lattice_path_n2_tilde(gs, s), bounds=(0.5, 1.0 + 1e-3),
                          method="bounded", options={"xatol": 1e-12})
    s_top = float(res.x)
    if _lattice_path_n2_tilde(gs, s_top) < eta:
        raise ValueError(f"eta = {eta} exceeds the lattice path maximum")
    return brentq(lambda s: _lattice_path_n2_tilde(gs, s) - eta, 0.0, s_top,
                  xtol=1e-15, rtol=1e-15)


def foliation_member(gs, eta: float, alpha: float) -> Field:
    """A PW+ field with N2-tilde = eta and ||f||_2 = alpha.

    Takes s Q on the path, then f_lam(x) = lam^{2/(p-1)} f(lam x), which
    leaves N2-tilde unchanged and multiplies the mass by lam^{4/(p-1) - d}.
    The result lives on Q's lattice contracted by ``lam`` so the samples
    carry over exactly.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    params = gs.params
    s = path_scale_for_level(gs, eta)
    base = gs.profile * s
    mass = s * s * gs.report.mass
    expo = 4.0 / (params.p - 1.0) - params.d
    lam = (alpha * alpha / mass) ** (1.0 / expo)
    src = gs.grid
    grid = GridSpec(src.d, src.n, src.L / lam, src.dealias)
    return Field(grid, lam ** (2.0 / (params.p - 1.0)) * base.values)


def scale_field(f: Field, lam: float, p: float) -> Field:
    """f_lam(x) = lam^{2/(p-1)} f(lam x) on the lattice contracted by ``lam``."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    g = f.grid
    return Field(GridSpec(g.d, g.n, g.L / lam, g.dealias), lam ** (2.0 / (p - 1.0)) * f.values)
