"""Backend selection for the dense boundary-integral kernels.

The compiled extension is used when it imports; setting the environment
variable ``FEBE_PURE_PYTHON=1`` forces the NumPy implementation.
"""
import os

from . import _kernels_py

BACKEND = "numpy"
_impl = _kernels_py
if os.environ.get("FEBE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

# pointwise helpers always come from the NumPy module
slp_value = _kernels_py.slp_value
slp_gradient = _kernels_py.slp_gradient
dlp_value = _kernels_py.dlp_value
dlp_gradient = _kernels_py.dlp_gradient


def backends():
    """Available backends as a dict ``name -> module``."""
    out = {"numpy": _kernels_py}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out


def _contig(*arrays):
    import numpy as np
    return [np.ascontiguousarray(a, dtype=np.int64 if a.dtype.kind in "iu" else float) for a in arrays]


def slp_galerkin(xq, wq, owner, nrows, a, b):
    xq, wq, owner, a, b = _contig(xq, wq, owner, a, b)
    return _impl.slp_galerkin(xq, wq, owner, nrows, a, b)


def dlp_galerkin(xq, wq, owner, nrows, a, b):
    xq, wq, owner, a, b = _contig(xq, wq, owner, a, b)
    return _impl.dlp_galerkin(xq, wq, owner, nrows, a, b)


def slp_grad_apply(x, own, a, b, dens):
    x, own, a, b, dens = _contig(x, own, a, b, dens)
    return _impl.slp_grad_apply(x, own, a, b, dens)


def dlp_grad_apply(x, own, a, b, d_start, d_end):
    x, own, a, b, d_start, d_end = _contig(x, own, a, b, d_start, d_end)
    return _impl.dlp_grad_apply(x, own, a, b, d_start, d_end)
