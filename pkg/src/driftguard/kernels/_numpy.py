"""Pure-numpy implementations of the hot distance kernels.

Used when the compiled extension is unavailable or when
``DRIFTGUARD_PURE_PYTHON=1`` is set. Semantics match
``driftguard.kernels._core`` up to floating-point summation order.
"""
import numpy as np

BACKEND = "numpy"


def pairwise_sqdist(a, b):
    """Squared Euclidean distances between rows of a (n,d) and b (m,d)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    d2 = aa + bb - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def assign_nearest(x, centroids):
    """Nearest-centroid assignment; ties go to the lowest centroid index.

    Returns (labels int64 (n,), sqdist float64 (n,)).
    """
    d2 = pairwise_sqdist(x, centroids)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(d2.shape[0]), labels]


def knn_mean_dist(x, k):
    """Mean Euclidean distance of each row to its k nearest other rows."""
    n = x.shape[0]
    d2 = pairwise_sqdist(x, x)
    np.fill_diagonal(d2, np.inf)
    part = np.partition(d2, k - 1, axis=1)[:, :k]
    return np.sqrt(part).sum(axis=1) / k


def meanshift_sweep(points, x, bandwidth):
    """One flat-kernel mean-shift sweep: move every point in ``points`` to
    the mean of the rows of ``x`` within ``bandwidth`` of it.

    Returns (new_points, max_move). Points with no neighbours stay put.
    """
    d2 = pairwise_sqdist(points, x)
    within = d2 <= bandwidth * bandwidth
    counts = within.sum(axis=1)
    new_points = points.copy()
    hit = counts > 0
    if np.any(hit):
        sums = within[hit].astype(np.float64) @ np.ascontiguousarray(x, dtype=np.float64)
        new_points[hit] = sums / counts[hit, None]
    max_move = float(np.sqrt(np.max(np.sum((new_points - points) ** 2, axis=1)))) if len(points) else 0.0
    return new_points, max_move
