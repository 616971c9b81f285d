"""Shared test oracles: finite differences, brute-force AUC, exhaustive
k-means partitions. These stay independent of the library code paths they
check."""
import numpy as np


def fd_gradient(fn, mat, h=1e-5):
    """Central finite differences of scalar fn with respect to matrix mat."""
    g = np.zeros_like(mat, dtype=np.float64)
    for idx in np.ndindex(mat.shape):
        up = mat.copy()
        dn = mat.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (fn(up) - fn(dn)) / (2 * h)
    return g


def max_rel_err(analytic, numeric, floor=1e-8):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def auc_pairwise(scores, labels):
    """O(N^2) rank-free AUC: P(anomaly > normal) + 0.5 P(equal)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def best_two_partition_wcss(x):
    """Exhaustive optimum over all 2-partitions of N <= 20 rows."""
    n = len(x)
    best = np.inf
    for bits in range(1, 2 ** (n - 1)):  # fix row 0 in group 0 to halve the space
        mask = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        if not mask.any() or mask.all():
            continue
        wcss = 0.0
        for group in (mask, ~mask):
            rows = x[group]
            wcss += float(np.sum((rows - rows.mean(axis=0)) ** 2))
        best = min(best, wcss)
    return best


def kmeans_wcss(x, model):
    wcss = 0.0
    for c in range(len(model.sizes)):
        rows = x[model.assignments == c]
        if len(rows):
            wcss += float(np.sum((rows - model.centroids[c]) ** 2))
    return wcss


def is_lloyd_fixed_point(x, model, tol=1e-9):
    """Each row assigned to its nearest centroid; each centroid equals the
    mean of its assigned rows."""
    d2 = ((x[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    nearest_ok = np.all(d2[np.arange(len(x)), model.assignments] <= d2.min(axis=1) + tol)
    means_ok = True
    for c in range(len(model.sizes)):
        rows = x[model.assignments == c]
        if len(rows) and not np.allclose(model.centroids[c], rows.mean(axis=0), atol=1e-9):
            means_ok = False
    return bool(nearest_ok and means_ok)
