"""Pick the compiled kernels when available, else the numpy fallback.

Set ``CRFDEPTH_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

BACKEND = "python"

if not os.environ.get("CRFDEPTH_PURE_PYTHON"):
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _fallback
    else:
        BACKEND = "cython"
else:
    _impl = _fallback

slic_assign = _impl.slic_assign
csr_matvec = _impl.csr_matvec
label_components = _impl.label_components

__all__ = ["BACKEND", "slic_assign", "csr_matvec", "label_components"]
