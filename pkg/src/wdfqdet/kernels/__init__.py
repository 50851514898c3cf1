"""Hot-kernel backend, chosen once at import.

The compiled extension is preferred; set ``WDFQDET_PURE_PYTHON=1`` to force
the numpy fallback.
"""
import os

from . import _pykernels

if os.environ.get("WDFQDET_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

im2col = _impl.im2col
col2im = _impl.col2im
bilinear_forward = _impl.bilinear_forward
bilinear_backward = _impl.bilinear_backward
linear_assignment = _impl.linear_assignment


def available_backends():
    names = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        names["cython"] = _ckernels
    return names
