"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-Python
module is the fallback.  Set STAIRCASE_PURE_PYTHON=1 to force the
fallback (used by the cross-backend tests and the benchmark).
"""

import os

from . import _kernels_py

if os.environ.get("STAIRCASE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

simulate_steps = _impl.simulate_steps
path_loglik = _impl.path_loglik
loglik_grad_hess = _impl.loglik_grad_hess
