"""Dominant-cluster mining over target features: k-means (default), a
diagonal-covariance GMM, flat-kernel mean-shift, and a kNN-density filter,
plus the selection step that turns a fitted model into pseudo-normal /
negative-pool id sets.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ClusteringError, DataError

COVAR_FLOOR = 1e-6


@dataclass(frozen=True)
class ClusterModel:
    algorithm: str
    assignments: np.ndarray  # (n,) cluster index per row
    centroids: np.ndarray  # (k, d)
    sizes: np.ndarray  # (k,)
    dominant: int
    params: dict

    def __post_init__(self):
        if int(self.sizes.sum()) != len(self.assignments):
            raise ClusteringError("cluster sizes must sum to the row count")
        if self.algorithm != "knn_filter" and self.dominant != int(np.argmax(self.sizes)):
            raise ClusteringError("dominant must be the argmax-size cluster (lowest index on ties)")

    def to_json(self, purity=None):
        out = {
            "algorithm": self.algorithm,
            "params": {k: v for k, v in self.params.items() if not k.endswith("_trace")},
            "sizes": [int(s) for s in self.sizes],
            "dominant": int(self.dominant),
        }
        if purity is not None:
            out["purity"] = float(purity)
        return out


@dataclass(frozen=True)
class SelectionResult:
    """Split of the target rows into the dominant (pseudo-normal) set and
    the rejected negative pool. ``purity`` is evaluation-only."""

    ids: np.ndarray  # all target ids, row order
    selected_mask: np.ndarray  # boolean, row order
    purity: float | None = None

    def __post_init__(self):
        if self.ids.shape != self.selected_mask.shape:
            raise DataError("ids and mask must align")
        if not np.any(self.selected_mask):
            raise DataError("selection must be non-empty")

    @property
    def selected_ids(self):
        return self.ids[self.selected_mask]

    @property
    def rejected_ids(self):
        return self.ids[~self.selected_mask]


def _as_matrix(features):
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise DataError("features must be a non-empty matrix")
    return x


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[int(rng.integers(n))]
    d2 = kernels.pairwise_sqdist(x, centroids[0:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = x[idx]
        d2 = np.minimum(d2, kernels.pairwise_sqdist(x, centroids[j : j + 1])[:, 0])
    return centroids


def fit_kmeans(features, k, seed, max_iter=100, tol=1e-6, init_assignments=None, restarts=1):
    """Lloyd's algorithm with k-means++ seeding.

    Empty clusters are re-seeded at the point farthest from its assigned
    centroid. At termination the centroids are the exact means of their
    assigned rows; with full convergence (assignment stability) the result
    is a Lloyd fixed point. ``init_assignments`` warm-starts the centroids
    from a previous clustering of the same rows; otherwise ``restarts``
    independent seedings run and the lowest final WCSS wins.
    """
    if init_assignments is None and restarts > 1:
        best = None
        for r in range(restarts):
            cand = fit_kmeans(features, k, [seed, r], max_iter, tol)
            if best is None or cand.params["wcss_trace"][-1] < best.params["wcss_trace"][-1]:
                best = cand
        return best
    x = _as_matrix(features)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ClusteringError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    if init_assignments is not None:
        init = np.asarray(init_assignments)
        if init.shape != (n,) or init.min() < 0 or init.max() >= k:
            raise ClusteringError("init_assignments must assign every row to one of k clusters")
        centroids = np.empty((k, x.shape[1]))
        for c in range(k):
            rows = x[init == c]
            centroids[c] = rows.mean(axis=0) if len(rows) else x[int(rng.integers(n))]
    else:
        centroids = _kmeanspp(x, k, rng)

    wcss_trace = []
    prev_labels = None
    for _ in range(max_iter):
        labels, mind2 = kernels.assign_nearest(x, centroids)
        sizes = np.bincount(labels, minlength=k)
        reseeded = False
        for c in np.flatnonzero(sizes == 0):
            far = int(np.argmax(mind2))
            centroids[c] = x[far]
            sizes[labels[far]] -= 1
            labels[far] = c
            sizes[c] = 1
            mind2[far] = 0.0
            reseeded = True
        wcss_trace.append(float(mind2.sum()))
        new_centroids = np.empty_like(centroids)
        for c in range(k):
            new_centroids[c] = x[labels == c].mean(axis=0)
        moved = float(np.sqrt(np.max(np.sum((new_centroids - centroids) ** 2, axis=1))))
        centroids = new_centroids
        stable = prev_labels is not None and not reseeded and np.array_equal(labels, prev_labels)
        if stable or moved <= tol:
            break
        prev_labels = labels

    sizes = np.bincount(labels, minlength=k)
    return ClusterModel(
        "kmeans", labels, centroids, sizes, int(np.argmax(sizes)),
        {"k": k, "seed": seed, "max_iter": max_iter, "tol": tol, "wcss_trace": wcss_trace},
    )


def fit_gmm(features, k, seed, max_iter=200, tol=1e-7):
    """EM for a diagonal-covariance Gaussian mixture, k-means initialized.

    Variances are floored at 1e-6; a component whose responsibility mass
    vanishes is re-initialized at a random row, with an error after three
    such failures. Assignments are argmax responsibility.
    """
    x = _as_matrix(features)
    n, d = x.shape
    if not 1 <= k <= n:
        raise ClusteringError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)

    km = fit_kmeans(x, k, seed=seed, max_iter=50)
    means = km.centroids.copy()
    variances = np.empty((k, d))
    weights = np.empty(k)
    global_var = np.maximum(x.var(axis=0), COVAR_FLOOR)
    for c in range(k):
        rows = x[km.assignments == c]
        variances[c] = np.maximum(rows.var(axis=0), COVAR_FLOOR) if len(rows) else global_var
        weights[c] = max(len(rows), 1) / n
    weights /= weights.sum()

    loglik_trace = []
    failures = 0
    prev_ll = -np.inf
    for _ in range(max_iter):
        log_prob = _diag_log_prob(x, means, variances) + np.log(weights)[None, :]
        m = np.max(log_prob, axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.sum(np.exp(log_prob - m), axis=1))
        ll = float(np.mean(lse))
        loglik_trace.append(ll)
        resp = np.exp(log_prob - lse[:, None])

        mass = resp.sum(axis=0)
        dead = np.flatnonzero(mass < 1e-10)
        if len(dead):
            failures += 1
            if failures > 3:
                raise ClusteringError("GMM component kept collapsing after 3 re-initializations")
            for c in dead:
                means[c] = x[int(rng.integers(n))]
                variances[c] = global_var
            weights = np.full(k, 1.0 / k)
            prev_ll = -np.inf
            continue

        weights = mass / n
        means = (resp.T @ x) / mass[:, None]
        ex2 = (resp.T @ (x * x)) / mass[:, None]
        variances = np.maximum(ex2 - means * means, COVAR_FLOOR)
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            break
        prev_ll = ll

    log_prob = _diag_log_prob(x, means, variances) + np.log(weights)[None, :]
    labels = np.argmax(log_prob, axis=1).astype(np.int64)
    sizes = np.bincount(labels, minlength=k)
    return ClusterModel(
        "gmm", labels, means, sizes, int(np.argmax(sizes)),
        {"k": k, "seed": seed, "max_iter": max_iter, "tol": tol,
         "weights": weights.tolist(), "loglik_trace": loglik_trace},
    )


def _diag_log_prob(x, means, variances):
    n, d = x.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for c in range(k):
        diff = x - means[c]
        out[:, c] = -0.5 * (np.sum(diff * diff / variances[c], axis=1)
                            + np.sum(np.log(2.0 * np.pi * variances[c])))
    return out


def fit_meanshift(features, bandwidth, seed=0, max_iter=300, tol=1e-5):
    """Flat-kernel mean-shift. Every point is iterated to its mode; modes
    closer than bandwidth/2 merge; rows are assigned to the nearest merged
    mode. Deterministic (the seed is accepted for API symmetry)."""
    x = _as_matrix(features)
    if bandwidth <= 0:
        raise ClusteringError("bandwidth must be positive")
    points = x.copy()
    for _ in range(max_iter):
        points, moved = kernels.meanshift_sweep(points, x, bandwidth)
        if moved <= tol:
            break

    merge_d = bandwidth / 2.0
    mode_groups = []  # list of row-index lists, in first-seen order
    mode_pos = []
    for i in range(x.shape[0]):
        placed = False
        for g, pos in enumerate(mode_pos):
            if np.sum((points[i] - pos) ** 2) <= merge_d * merge_d:
                mode_groups[g].append(i)
                # running mean keeps the merged mode centered
                mode_pos[g] = pos + (points[i] - pos) / len(mode_groups[g])
                placed = True
                break
        if not placed:
            mode_groups.append([i])
            mode_pos.append(points[i].copy())
    modes = np.array(mode_pos)
    labels, _ = kernels.assign_nearest(x, modes)
    sizes = np.bincount(labels, minlength=len(modes))
    return ClusterModel(
        "meanshift", labels, modes, sizes, int(np.argmax(sizes)),
        {"bandwidth": bandwidth, "seed": seed, "max_iter": max_iter, "tol": tol},
    )


def fit_knn_filter(features, k, keep_fraction):
    """Density filter: score rows by mean distance to their k nearest
    neighbours and keep the lowest-scoring ``keep_fraction`` as the
    dominant pseudo-cluster (index 0); the rest form the drop cluster."""
    x = _as_matrix(features)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ClusteringError(f"need 1 <= k < n, got k={k}, n={n}")
    if not 0.0 < keep_fraction <= 1.0:
        raise ClusteringError("keep_fraction must be in (0, 1]")
    scores = kernels.knn_mean_dist(x, k)
    n_keep = min(n, max(1, int(np.round(keep_fraction * n))))
    order = np.argsort(scores, kind="stable")
    labels = np.ones(n, dtype=np.int64)
    labels[order[:n_keep]] = 0
    keep_rows = x[labels == 0]
    drop_rows = x[labels == 1]
    centroids = np.stack([
        keep_rows.mean(axis=0),
        drop_rows.mean(axis=0) if len(drop_rows) else np.zeros(x.shape[1]),
    ])
    sizes = np.array([n_keep, n - n_keep])
    return ClusterModel(
        "knn_filter", labels, centroids, sizes, 0,
        {"k": k, "keep_fraction": keep_fraction, "scores_trace": scores.tolist()},
    )


def select_dominant(model, target):
    """Materialize the dominant cluster of a fitted model as the selected
    (pseudo-normal) id set; everything else becomes the negative pool.
    Purity is filled in only when the target carries evaluation labels."""
    if len(model.assignments) != target.n:
        raise DataError("model was fitted on a different number of rows")
    mask = model.assignments == model.dominant
    purity = None
    if target.labels is not None:
        purity = float(np.mean(target.labels[mask] == 0))
    return SelectionResult(target.base.ids.copy(), mask, purity)
