"""Numerical toolkit for the focusing power NLS potential well dichotomy.

    2i psi_t + Laplacian psi + |psi|^{p-1} psi = 0,   1 + 4/d < p < (d+2)/(d-2).

Submodules: :mod:`~nlspw.grid` (lattices and spectral operators),
:mod:`~nlspw.functionals`, :mod:`~nlspw.ground_state`,
:mod:`~nlspw.classifier`, :mod:`~nlspw.evolution`, :mod:`~nlspw.virial`,
:mod:`~nlspw.harness` and :mod:`~nlspw.cli`.
"""
from .classifier import Membership, PWVerdict, classify, instability_pair, path_scan
from .evolution import EvolveConfig, Termination, conservation_drift, evolve, pw_invariance_check
from .functionals import FunctionalReport, evaluate_functionals
from .grid import Field, GridSpec, ModelParams
from .ground_state import GroundState, rescale_ground_state, solve_ground_state
from .kernels import BACKEND as KERNEL_BACKEND
from .virial import build_weights, virial_ledger

__version__ = "0.1.0"

__all__ = [
    "Field", "GridSpec", "ModelParams", "FunctionalReport", "evaluate_functionals",
    "GroundState", "solve_ground_state", "rescale_ground_state",
    "Membership", "PWVerdict", "classify", "path_scan", "instability_pair",
    "EvolveConfig", "Termination", "evolve", "conservation_drift", "pw_invariance_check",
    "build_weights", "virial_ledger", "KERNEL_BACKEND",
]
