"""Hot pointwise kernels with a compiled backend and a NumPy fallback.

The compiled extension is used when it was built; set
``NLSPW_KERNELS=python`` to force the fallback.  ``BACKEND`` names the
backend in use.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("NLSPW_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

nonlinear_phase = _impl.nonlinear_phase
abs_pow_sum = _impl.abs_pow_sum
weighted_abs2_sum = _impl.weighted_abs2_sum

__all__ = ["BACKEND", "nonlinear_phase", "abs_pow_sum", "weighted_abs2_sum"]
