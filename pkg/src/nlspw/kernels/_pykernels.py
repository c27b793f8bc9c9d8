"""NumPy implementations of the pointwise kernels (fallback backend)."""
import numpy as np


def nonlinear_phase(psi, coef, p):
    """In place: psi *= exp(i coef |psi|^(p-1)).  Returns psi."""
    a2 = psi.real ** 2 + psi.imag ** 2
    th = coef * (a2 if p == 3.0 else a2 ** (0.5 * (p - 1.0)))
    psi *= np.cos(th) + 1j * np.sin(th)
    return psi


def abs_pow_sum(psi, q):
    """sum |psi|^q over all samples."""
    a2 = psi.real ** 2 + psi.imag ** 2
    return float(np.sum(a2 ** (0.5 * q)))


def weighted_abs2_sum(psi, weight):
    """sum weight * |psi|^2 over all samples."""
    return float(np.sum(weight * (psi.real ** 2 + psi.imag ** 2)))
