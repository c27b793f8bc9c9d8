# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pointwise kernels for the split-step inner loop."""
from libc.math cimport pow, cos, sin, floor

import numpy as np


cdef inline int _half_integer_power(double e):
    """e/2 when e is a small non-negative even integer, else -1."""
    cdef double m = 0.5 * e
    if m >= 0.0 and m <= 16.0 and m == floor(m):
        return <int> m
    return -1


cdef inline double _ipow(double x, int m) nogil:
    cdef double out = 1.0
    while m > 0:
        if m & 1:
            out *= x
        x *= x
        m >>= 1
    return out


def nonlinear_phase(psi, double coef, double p):
    """In place: psi *= exp(i coef |psi|^(p-1)).  Returns psi."""
    if not psi.flags.c_contiguous:
        raise ValueError("nonlinear_phase needs a C-contiguous array")
    cdef double complex[::1] z = psi.reshape(-1)
    cdef Py_ssize_t i, n = z.shape[0]
    cdef double a2, th, c, s, re, im
    cdef double half = 0.5 * (p - 1.0)
    cdef int m = _half_integer_power(p - 1.0)
    with nogil:
        for i in range(n):
            re = z[i].real
            im = z[i].imag
            a2 = re * re + im * im
            if a2 == 0.0:
                continue
            if m >= 0:
                th = coef * _ipow(a2, m)
            else:
                th = coef * pow(a2, half)
            c = cos(th)
            s = sin(th)
            z[i] = (re * c - im * s) + 1j * (re * s + im * c)
    return psi


def abs_pow_sum(psi, double q):
    """sum |psi|^q over all samples."""
    cdef const double[::1] x = np.ascontiguousarray(psi, dtype=np.complex128).reshape(-1).view(np.float64)
    cdef Py_ssize_t i, n = x.shape[0] // 2
    cdef double a2, acc0 = 0.0, acc1 = 0.0
    cdef double half = 0.5 * q
    cdef int m = _half_integer_power(q)
    with nogil:
        if m == 2:
            for i in range(0, n - 1, 2):
                a2 = x[2 * i] * x[2 * i] + x[2 * i + 1] * x[2 * i + 1]
                acc0 += a2 * a2
                a2 = x[2 * i + 2] * x[2 * i + 2] + x[2 * i + 3] * x[2 * i + 3]
                acc1 += a2 * a2
            if n % 2:
                a2 = x[2 * n - 2] * x[2 * n - 2] + x[2 * n - 1] * x[2 * n - 1]
                acc0 += a2 * a2
        elif m >= 0:
            for i in range(n):
                acc0 += _ipow(x[2 * i] * x[2 * i] + x[2 * i + 1] * x[2 * i + 1], m)
        else:
            for i in range(n):
                a2 = x[2 * i] * x[2 * i] + x[2 * i + 1] * x[2 * i + 1]
                if a2 != 0.0:
                    acc0 += pow(a2, half)
    return acc0 + acc1


def weighted_abs2_sum(psi, weight):
    """sum weight * |psi|^2 over all samples."""
    cdef const double complex[::1] z = np.ascontiguousarray(psi, dtype=np.complex128).reshape(-1)
    cdef const double[::1] w = np.ascontiguousarray(np.broadcast_to(weight, np.shape(psi)), dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, n = z.shape[0]
    cdef double acc = 0.0
    with nogil:
        for i in range(n):
            acc += w[i] * (z[i].real * z[i].real + z[i].imag * z[i].imag)
    return acc
