"""Hot-loop kernels, compiled when available.

The compiled module ``_ckernels`` is preferred; ``_pykernels`` is the numpy
fallback with identical signatures. Set ``PTSNE_PURE_PYTHON=1`` before
import to force the fallback.
"""
import os

from . import _pykernels

try:
    if os.environ.get("PTSNE_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

OK = _pykernels.OK
DEGENERATE = _pykernels.DEGENERATE
NOT_CONVERGED = _pykernels.NOT_CONVERGED

sqdist = _impl.sqdist
tsne_gradient = _impl.tsne_gradient
cross_entropy = _impl.cross_entropy
beta_search = _impl.beta_search
kde_grid = _impl.kde_grid
water_track = _impl.water_track


def available_backends():
    """Map of backend name to kernel module, for tests and benchmarks."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
