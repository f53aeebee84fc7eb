"""Backend selection for the hot loops.

The compiled extension is used when it imports cleanly; setting the
environment variable ``INFOACQ_PURE_PYTHON=1`` forces the NumPy fallback.
"""

import os

from . import _pykernels

if os.environ.get("INFOACQ_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels
        BACKEND = "python"

kinv = _impl.kinv
kstar = _impl.kstar
fan_rk4 = _impl.fan_rk4
curve_rk4 = _impl.curve_rk4
curve_end = _impl.curve_end
shoot = _impl.shoot
field_query = _impl.field_query
path_rk4 = _impl.path_rk4
upwind_step = _impl.upwind_step
upwind_march = _impl.upwind_march
