"""Loss functions, each returning a value plus gradients with respect to
the feature matrices that produced it.

The compactness loss uses raw Euclidean geometry; the contrastive losses
cosine-normalize internally. Gradient roles name the feature matrix they
apply to ("source", "selected", "negatives", ...).
"""
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyNegativePool


@dataclass
class LossValue:
    value: float
    grads: dict


def dsvdd_loss(source_feats, center):
    """Mean squared distance to the hypersphere center.

    value = (1/Ns) sum_i ||x_i - mu||^2, grad wrt x_i = 2 (x_i - mu) / Ns.
    The center is a constant.
    """
    x = np.asarray(source_feats, dtype=np.float64)
    mu = np.asarray(center, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise DataError("source_feats must be a non-empty matrix")
    if mu.shape != (x.shape[1],):
        raise DataError("center dimension mismatch")
    diffs = x - mu
    value = float(np.mean(np.sum(diffs * diffs, axis=1)))
    return LossValue(value, {"source": 2.0 * diffs / x.shape[0]})


def _unit_rows(x):
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DataError("zero vector has no cosine direction")
    return x / norms, norms


def _through_unit(grad_hat, x_hat, norms):
    """Backprop through row normalization x_hat = x/||x||."""
    inner = np.sum(grad_hat * x_hat, axis=-1, keepdims=True)
    return (grad_hat - inner * x_hat) / norms


def contrastive_pair_loss(src_i, pos_j, negatives, tau, include_positive=False):
    """Loss of one positive (source, target) pair against a negative pool:

        l = -sim(u, v)/tau + log sum_p exp(sim(u, w_p)/tau)

    with cosine similarity. ``include_positive`` adds exp(sim(u,v)/tau) to
    the denominator (the standard InfoNCE form).
    """
    if tau <= 0:
        raise DataError("tau must be positive")
    negatives = np.asarray(negatives, dtype=np.float64)
    if negatives.ndim != 2 or negatives.shape[0] == 0:
        raise EmptyNegativePool("contrastive loss needs at least one negative")
    u = np.asarray(src_i, dtype=np.float64).reshape(1, -1)
    v = np.asarray(pos_j, dtype=np.float64).reshape(1, -1)
    out = uda_loss(u, v, negatives, tau, include_positive=include_positive)
    return LossValue(
        out.value,
        {
            "source": out.grads["source"][0],
            "positive": out.grads["selected"][0],
            "negatives": out.grads["negatives"],
        },
    )


def uda_loss(src_feats, selected_feats, rejected_feats, tau, include_positive=False):
    """Alignment loss: the pair loss averaged over every (source, selected)
    pair, all pairs sharing one negative pool.

    Implemented in a vectorized, log-sum-exp-stabilized form; gradients
    flow to all three feature matrices.
    """
    if tau <= 0:
        raise DataError("tau must be positive")
    rej = np.asarray(rejected_feats, dtype=np.float64)
    if rej.ndim != 2 or rej.shape[0] == 0:
        raise EmptyNegativePool("alignment loss needs a non-empty negative pool")
    src = np.asarray(src_feats, dtype=np.float64)
    sel = np.asarray(selected_feats, dtype=np.float64)
    if src.ndim != 2 or sel.ndim != 2 or src.shape[0] < 1 or sel.shape[0] < 1:
        raise DataError("feature matrices must be non-empty")

    u_hat, u_n = _unit_rows(src)
    v_hat, v_n = _unit_rows(sel)
    w_hat, w_n = _unit_rows(rej)
    ns, s = u_hat.shape[0], v_hat.shape[0]

    s_pos = u_hat @ v_hat.T  # (ns, s)
    s_neg = u_hat @ w_hat.T  # (ns, m)
    zn = s_neg / tau
    m_i = np.max(zn, axis=1, keepdims=True)
    lse = m_i[:, 0] + np.log(np.sum(np.exp(zn - m_i), axis=1))  # (ns,)
    soft_neg = np.exp(zn - lse[:, None])  # softmax over negatives, rows sum to 1

    if include_positive:
        log_denom = np.logaddexp(lse[:, None], s_pos / tau)  # (ns, s)
        value = float(np.mean(-s_pos / tau + log_denom))
        p_pos = np.exp(s_pos / tau - log_denom)
        d_spos = (p_pos - 1.0) / (tau * ns * s)
        # sum over j of exp(s_neg/tau - log_denom_ij), factored stably
        resid = np.sum(np.exp(lse[:, None] - log_denom), axis=1)  # (ns,)
        d_sneg = soft_neg * (resid / (tau * ns * s))[:, None]
    else:
        value = float(np.mean(-s_pos / tau) + np.mean(lse))
        d_spos = np.full((ns, s), -1.0 / (tau * ns * s))
        d_sneg = soft_neg / (tau * ns)

    g_u_hat = d_spos @ v_hat + d_sneg @ w_hat
    g_v_hat = d_spos.T @ u_hat
    g_w_hat = d_sneg.T @ u_hat
    return LossValue(
        value,
        {
            "source": _through_unit(g_u_hat, u_hat, u_n),
            "selected": _through_unit(g_v_hat, v_hat, v_n),
            "negatives": _through_unit(g_w_hat, w_hat, w_n),
        },
    )


def attraction_loss(src_feats, selected_feats, tau):
    """Degenerate alignment used when the negative pool is empty: the
    denominator over rejected rows is a vacuous sum, leaving only the
    cosine-attraction term, value = mean_ij(-sim(u_i, v_j)) / tau."""
    if tau <= 0:
        raise DataError("tau must be positive")
    u_hat, u_n = _unit_rows(np.asarray(src_feats, dtype=np.float64))
    v_hat, v_n = _unit_rows(np.asarray(selected_feats, dtype=np.float64))
    ns, s = u_hat.shape[0], v_hat.shape[0]
    sims = u_hat @ v_hat.T
    value = float(np.mean(-sims / tau))
    coeff = -1.0 / (tau * ns * s)
    g_u_hat = coeff * np.sum(v_hat, axis=0)[None, :].repeat(ns, axis=0)
    g_v_hat = coeff * np.sum(u_hat, axis=0)[None, :].repeat(s, axis=0)
    return LossValue(
        value,
        {
            "source": _through_unit(g_u_hat, u_hat, u_n),
            "selected": _through_unit(g_v_hat, v_hat, v_n),
        },
    )


def moment_match_loss(src_feats, selected_feats):
    """First-moment alignment: squared distance between the feature means
    of the two batches. The linear-kernel limit of distribution matching,
    used as a degenerate-alignment fallback."""
    x = np.asarray(src_feats, dtype=np.float64)
    y = np.asarray(selected_feats, dtype=np.float64)
    diff = x.mean(axis=0) - y.mean(axis=0)
    gx = np.broadcast_to(2.0 * diff / x.shape[0], x.shape).copy()
    gy = np.broadcast_to(-2.0 * diff / y.shape[0], y.shape).copy()
    return LossValue(float(diff @ diff), {"source": gx, "selected": gy})


def centroid_pull_loss(src_feats, selected_feats):
    """Per-row Euclidean attraction of every selected row to the source
    batch centroid (and of the centroid toward the selected rows). The
    bluntest form of direct alignment: every target row, anomalous or not,
    is dragged toward the one-class region."""
    x = np.asarray(src_feats, dtype=np.float64)
    y = np.asarray(selected_feats, dtype=np.float64)
    ns, s = x.shape[0], y.shape[0]
    xbar = x.mean(axis=0)
    diffs = y - xbar
    value = float(np.mean(np.sum(diffs * diffs, axis=1)))
    gy = 2.0 * diffs / s
    gx = np.broadcast_to(-2.0 * diffs.sum(axis=0) / (s * ns), x.shape).copy()
    return LossValue(value, {"source": gx, "selected": gy})


def median_heuristic_bandwidths(feats, scales=(0.5, 1.0, 2.0, 4.0)):
    """Gaussian-kernel bandwidths: the median pairwise distance scaled by
    ``scales``. Falls back to 1.0 when the median degenerates to 0."""
    x = np.asarray(feats, dtype=np.float64)
    d2 = np.sum(x * x, axis=1)[:, None] + np.sum(x * x, axis=1)[None, :] - 2.0 * (x @ x.T)
    iu = np.triu_indices(x.shape[0], k=1)
    med = float(np.sqrt(np.maximum(np.median(d2[iu]), 0.0))) if len(iu[0]) else 0.0
    if med <= 0.0:
        med = 1.0
    return [med * s for s in scales]


def mmd_loss(src_feats, tgt_feats, bandwidths):
    """Unbiased squared maximum mean discrepancy with a sum of Gaussian
    kernels k(a,b) = exp(-||a-b||^2 / (2 bw^2)).

    For equal sample counts the paired U-statistic form (cross terms
    exclude i == j) is used, which is exactly zero on identical sets; for
    unequal counts the full cross sum applies. Bandwidths are constants.
    """
    x = np.asarray(src_feats, dtype=np.float64)
    y = np.asarray(tgt_feats, dtype=np.float64)
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise DataError("mmd needs at least two rows per set")
    if not bandwidths:
        raise DataError("need at least one bandwidth")

    dxx = _sqdist(x, x)
    dyy = _sqdist(y, y)
    dxy = _sqdist(x, y)
    paired = m == n

    value = 0.0
    gx = np.zeros_like(x)
    gy = np.zeros_like(y)
    for bw in bandwidths:
        c = 2.0 * bw * bw
        kxx = np.exp(-dxx / c)
        kyy = np.exp(-dyy / c)
        kxy = np.exp(-dxy / c)
        np.fill_diagonal(kxx, 0.0)
        np.fill_diagonal(kyy, 0.0)
        a = kxx.sum() / (m * (m - 1))
        b = kyy.sum() / (n * (n - 1))
        if paired:
            kxy_c = kxy.copy()
            np.fill_diagonal(kxy_c, 0.0)
            cross_coeff = 2.0 / (m * (m - 1))
        else:
            kxy_c = kxy
            cross_coeff = 2.0 / (m * n)
        value += a + b - cross_coeff * kxy_c.sum()

        inv = 1.0 / (bw * bw)
        coeff_xx = 2.0 / (m * (m - 1))
        coeff_yy = 2.0 / (n * (n - 1))
        gx += -coeff_xx * inv * (kxx.sum(axis=1)[:, None] * x - kxx @ x)
        gy += -coeff_yy * inv * (kyy.sum(axis=1)[:, None] * y - kyy @ y)
        gx += cross_coeff * inv * (kxy_c.sum(axis=1)[:, None] * x - kxy_c @ y)
        gy += cross_coeff * inv * (kxy_c.sum(axis=0)[:, None] * y - kxy_c.T @ x)
    return LossValue(float(value), {"source": gx, "target": gy})


def _sqdist(a, b):
    d2 = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def total_loss(l_ad, l_uda, lambda1, lambda2):
    """Weighted sum of the compactness and alignment losses; gradients
    combine linearly, role-wise."""
    grads = {}
    for role, g in l_ad.grads.items():
        grads[role] = lambda1 * g
    for role, g in l_uda.grads.items():
        if role in grads:
            grads[role] = grads[role] + lambda2 * g
        else:
            grads[role] = lambda2 * g
    return LossValue(lambda1 * l_ad.value + lambda2 * l_uda.value, grads)
