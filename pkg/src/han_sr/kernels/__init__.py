"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; set
``HAN_KERNELS=numpy`` to force the pure-numpy fallback (the compiled one can
be requested explicitly with ``HAN_KERNELS=native``, which then fails loudly
if it is missing).
"""

import os

from . import numpy_backend

try:
    from . import _native
except ImportError:
    _native = None

_requested = os.environ.get("HAN_KERNELS", "").strip().lower()
if _requested == "numpy":
    _active = numpy_backend
elif _requested == "native":
    if _native is None:
        raise ImportError("HAN_KERNELS=native but the compiled kernels are not built")
    _active = _native
else:
    _active = _native if _native is not None else numpy_backend

BACKEND = "native" if _active is _native else "numpy"

im2col_2d = _active.im2col_2d
col2im_2d = _active.col2im_2d
im2col_3d = _active.im2col_3d
col2im_3d = _active.col2im_3d
conv_output_size = numpy_backend.conv_output_size


def native_backend():
    """The compiled module, or None when only the fallback is available."""
    return _native
