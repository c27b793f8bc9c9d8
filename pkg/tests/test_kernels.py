"""Compiled kernels agree with the NumPy fallback; the fallback is selectable."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlspw import kernels
from nlspw.kernels import _pykernels

try:
    from nlspw.kernels import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")

shapes = st.sampled_from([(17,), (8, 9), (4, 5, 6)])
powers = st.sampled_from([3.0, 4.0, 5.0, 7.0, 3.5, 4.2, 2.5])


def _field(seed, shape, scale):
    rng = np.random.default_rng(seed)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@needs_ext
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), shape=shapes, p=powers,
       coef=st.floats(-2.0, 2.0), scale=st.floats(1e-3, 3.0))
def test_nonlinear_phase_parity(seed, shape, p, coef, scale):
    psi = _field(seed, shape, scale)
    a, b = psi.copy(), psi.copy()
    _pykernels.nonlinear_phase(a, coef, p)
    _ckernels.nonlinear_phase(b, coef, p)
    # cos/sin of a large angle theta carry an absolute error of order eps * theta
    theta = np.max(np.abs(coef) * np.abs(psi) ** (p - 1.0))
    assert np.allclose(a, b, rtol=1e-13 * (1.0 + theta), atol=1e-15 * scale)
    assert np.allclose(np.abs(b), np.abs(psi), rtol=1e-13)


@needs_ext
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), shape=shapes,
       q=st.sampled_from([2.0, 4.0, 6.0, 8.0, 4.5, 5.2, 3.0]), scale=st.floats(1e-2, 3.0))
def test_abs_pow_sum_parity(seed, shape, q, scale):
    psi = _field(seed, shape, scale)
    a = _pykernels.abs_pow_sum(psi, q)
    assert _ckernels.abs_pow_sum(psi, q) == pytest.approx(a, rel=1e-12)
    assert a == pytest.approx(float(np.sum(np.abs(psi) ** q)), rel=1e-12)


@needs_ext
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), shape=shapes)
def test_weighted_abs2_sum_parity(seed, shape):
    psi = _field(seed, shape, 1.0)
    w = np.abs(_field(seed + 1, shape, 1.0))
    a = _pykernels.weighted_abs2_sum(psi, w)
    assert _ckernels.weighted_abs2_sum(psi, w) == pytest.approx(a, rel=1e-12)


def test_phase_is_exact_for_constant_modulus():
    psi = np.full(10, 2.0 + 0j)
    _pykernels.nonlinear_phase(psi, 0.25, 3.0)
    assert np.allclose(psi, 2.0 * np.exp(1j))


def test_backend_name():
    assert kernels.BACKEND == ("cython" if _ckernels is not None
                               and os.environ.get("NLSPW_KERNELS", "").lower() != "python"
                               else "python")


def test_fallback_selected_by_environment():
    env = dict(os.environ, NLSPW_KERNELS="python")
    code = "import nlspw.kernels as k; print(k.BACKEND, k.nonlinear_phase.__module__)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["python", "nlspw.kernels._pykernels"]
