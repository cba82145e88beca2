"""Hot-loop kernels: compiled core when built, NumPy fallback otherwise.

Set ``ROBUST_PRECODING_PURE=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("ROBUST_PRECODING_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

modulo = _impl.modulo
thp_precode = _impl.thp_precode
# the BLAS-backed NumPy product beats the compiled loop here
quad_values = _kernels_py.quad_values
radial_limit = _impl.radial_limit
ascend = _impl.ascend

python = _kernels_py
