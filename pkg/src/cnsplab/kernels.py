"""Backend selection for the hot Green-symbol kernel.

The compiled extension is used when available; set CNSPLAB_PURE_PYTHON=1 to
force the numpy fallback.  Both implement the same formulas and agree to a
few ulps (see tests/test_kernels.py and ``python -m cnsplab.bench``).
"""

from __future__ import annotations

import os

from . import _green_py

if os.environ.get("CNSPLAB_PURE_PYTHON"):
    _impl = _green_py
else:
    try:
        from . import _green_cy as _impl
    except ImportError:
        _impl = _green_py

backend_name: str = _impl.backend_name
green_core = _impl.green_core

# the phi-function machinery is set-up-time only; always numpy
phi_scalar = _green_py.phi_scalar
phi_pair_2x2 = _green_py.phi_pair_2x2
phi_derivative = _green_py.phi_derivative
green_core_python = _green_py.green_core
