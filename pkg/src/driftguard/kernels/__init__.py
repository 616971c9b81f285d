"""Hot distance kernels with a compiled core and a numpy fallback.

The compiled extension (``driftguard.kernels._core``) is preferred when it
imported cleanly; set ``DRIFTGUARD_PURE_PYTHON=1`` to force the numpy
implementation. Both backends expose the same four functions.
"""
import os

from . import _numpy

if os.environ.get("DRIFTGUARD_PURE_PYTHON", "") == "1":
    _impl = _numpy
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _numpy

pairwise_sqdist = _impl.pairwise_sqdist
assign_nearest = _impl.assign_nearest
knn_mean_dist = _impl.knn_mean_dist
meanshift_sweep = _impl.meanshift_sweep


def backend_name():
    return _impl.BACKEND
