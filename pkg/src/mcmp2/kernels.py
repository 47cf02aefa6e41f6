"""Backend selection for the hot per-step kernels.

numba is used when importable unless ``MCMP2_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``; the pure-numpy path is otherwise identical
in signature and random-number consumption.
"""
import os

_flag = os.environ.get("MCMP2_DISABLE_NUMBA", "")
USE_NUMBA = _flag in ("", "0")

if USE_NUMBA:
    try:
        from . import _kernels_numba as _impl
    except ImportError:  # numba missing
        USE_NUMBA = False
if not USE_NUMBA:
    from . import _kernels_numpy as _impl

BACKEND = "numba" if USE_NUMBA else "numpy"

eval_basis = _impl.eval_basis
eval_g = _impl.eval_g
metropolis = _impl.metropolis
step_estimate = _impl.step_estimate
production = _impl.production
