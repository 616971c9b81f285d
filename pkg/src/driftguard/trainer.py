"""End-to-end training: center initialization, dominant-cluster selection,
the epoch/batch loop combining compactness and alignment, and scoring.

The optimization core (`_fit`) receives label-free views only; target
labels never influence parameters. Purity numbers in the log are filled in
afterwards from the evaluation view.
"""
import math
from dataclasses import dataclass, fields

import numpy as np

from .clustering import SelectionResult, fit_gmm, fit_kmeans, fit_knn_filter, fit_meanshift
from .errors import ConfigError, DataError, TrainingError
from .evaluation import config_hash
from .objectives import (
    LossValue,
    attraction_loss,
    centroid_pull_loss,
    moment_match_loss,
    dsvdd_loss,
    median_heuristic_bandwidths,
    mmd_loss,
    total_loss,
    uda_loss,
)
from .projector import OptimizerState, backward, forward, init_network, set_center, sgd_step

CLUSTERING_ALGOS = ("kmeans", "gmm", "meanshift", "knn_filter", "none")
ALIGNMENTS = ("contrastive", "mmd", "none")
CLUSTER_SPACES = ("aux", "base")
MODES = ("unsupervised", "few_shot")
NEGATIVE_POLICIES = ("attract", "infonce", "moment", "centroid", "skip")


@dataclass(frozen=True)
class TrainingConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    tau: float = 0.1
    base_lr: float = 1e-3
    weight_decay: float = 5e-7
    batch_size: int = 256
    epochs: int = 50
    k: int = 2
    clustering: str = "kmeans"
    cluster_space: str = "aux"
    alignment: str = "contrastive"
    recluster_every_epoch: bool = False
    seed: int = 0
    mode: str = "unsupervised"
    few_shot_ids: tuple | None = None
    hidden_dims: tuple = (64,)
    output_dim: int = 32
    momentum: float = 0.0
    no_bias: bool = False
    normalize_aux: bool = True
    include_positive_in_denominator: bool = False
    empty_negative_policy: str = "centroid"
    recenter_every_epoch: bool = False
    stop_gradient_negatives: bool = False
    few_shot_synthetic_negatives: bool = False
    bandwidth: float | None = None  # meanshift; None -> median heuristic
    knn_k: int = 1
    keep_fraction: float = 0.9
    cluster_max_iter: int = 100
    cluster_tol: float = 1e-6
    cluster_restarts: int = 4
    mmd_scales: tuple = (0.5, 1.0, 2.0, 4.0)

    def validate(self):
        if self.tau <= 0 or self.base_lr <= 0:
            raise ConfigError("tau and base_lr must be positive")
        if self.weight_decay < 0 or self.momentum < 0:
            raise ConfigError("weight_decay and momentum must be non-negative")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda weights must be non-negative")
        if self.batch_size < 1 or self.epochs < 0 or self.k < 1 or self.output_dim < 1:
            raise ConfigError("batch_size/epochs/k/output_dim out of range")
        if self.clustering not in CLUSTERING_ALGOS:
            raise ConfigError(f"clustering must be one of {CLUSTERING_ALGOS}")
        if self.alignment not in ALIGNMENTS:
            raise ConfigError(f"alignment must be one of {ALIGNMENTS}")
        if self.cluster_space not in CLUSTER_SPACES:
            raise ConfigError(f"cluster_space must be one of {CLUSTER_SPACES}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.empty_negative_policy not in NEGATIVE_POLICIES:
            raise ConfigError(f"empty_negative_policy must be one of {NEGATIVE_POLICIES}")
        if self.mode == "few_shot" and not self.few_shot_ids:
            raise ConfigError("few_shot mode needs a non-empty few_shot_ids list")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigError("keep_fraction must be in (0, 1]")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        if self.cluster_restarts < 1:
            raise ConfigError("cluster_restarts must be >= 1")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive")

    def to_json(self):
        out = {"version": 1}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @staticmethod
    def from_json(obj):
        obj = dict(obj)
        obj.pop("version", None)
        known = {f.name: f for f in fields(TrainingConfig)}
        unknown = set(obj) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, value in obj.items():
            kwargs[name] = _coerce(name, value)
        cfg = TrainingConfig(**kwargs)
        cfg.validate()
        return cfg


_BOOL_FIELDS = {
    "recluster_every_epoch", "no_bias", "normalize_aux", "include_positive_in_denominator",
    "recenter_every_epoch", "stop_gradient_negatives", "few_shot_synthetic_negatives",
}
_INT_FIELDS = {"batch_size", "epochs", "k", "seed", "output_dim", "knn_k", "cluster_max_iter",
               "cluster_restarts"}
_FLOAT_FIELDS = {
    "lambda1", "lambda2", "tau", "base_lr", "weight_decay", "momentum",
    "keep_fraction", "cluster_tol",
}
_STR_FIELDS = {"clustering", "cluster_space", "alignment", "mode", "empty_negative_policy"}
_INT_TUPLE_FIELDS = {"hidden_dims", "few_shot_ids"}
_FLOAT_TUPLE_FIELDS = {"mmd_scales"}


def _coerce(name, value):
    try:
        if name in _BOOL_FIELDS:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            raise ValueError(f"expected bool, got {value!r}")
        if name in _INT_FIELDS:
            if isinstance(value, bool):
                raise ValueError("expected int, got bool")
            return int(value)
        if name in _FLOAT_FIELDS:
            if isinstance(value, bool):
                raise ValueError("expected float, got bool")
            return float(value)
        if name in _STR_FIELDS:
            if not isinstance(value, str):
                raise ValueError(f"expected string, got {value!r}")
            return value
        if name == "bandwidth":
            if value is None or (isinstance(value, str) and value.lower() in ("none", "null")):
                return None
            return float(value)
        if name in _INT_TUPLE_FIELDS:
            if value is None:
                return None
            if isinstance(value, str):
                value = [v for v in value.split(",") if v != ""]
            return tuple(int(v) for v in value)
        if name in _FLOAT_TUPLE_FIELDS:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v != ""]
            return tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name!r}: {exc}") from exc
    raise ConfigError(f"no coercion rule for field {name!r}")


@dataclass
class TrainedDetector:
    network: object
    config: TrainingConfig
    log: list
    selection: SelectionResult
    config_hash: str
    threshold: float | None = None


def train(source, target, cfg):
    """Run the full pipeline and return the trained detector.

    The source must be normal-only. Target labels, if any, are stripped
    before the optimization core runs and are used afterwards only to fill
    the purity instrumentation.
    """
    cfg.validate()
    if source.labels is None or np.any(source.labels != 0):
        raise DataError("source must be normal-only (labels present and all zero)")

    net = init_network(source.dim, cfg.hidden_dims, cfg.output_dim,
                       seed=np.random.default_rng([cfg.seed, 0]).integers(2**31),
                       bias=not cfg.no_bias)
    set_center(net, source)

    base_view = target.base.without_labels()
    aux_view = target.aux.without_labels()
    net, log, masks = _fit(net, source.features.astype(np.float64), base_view, aux_view, cfg)

    final_mask = masks[-1]
    purity = None
    if target.labels is not None:
        for entry, mask in zip(log, masks):
            entry["purity"] = float(np.mean(target.labels[mask] == 0))
        purity = float(np.mean(target.labels[final_mask] == 0))
    selection = SelectionResult(target.base.ids.copy(), final_mask, purity)
    return TrainedDetector(net, cfg, log, selection, config_hash(cfg.to_json()))


def score(detector, batch):
    """Squared distance of each row's features to the hypersphere center;
    higher means more anomalous."""
    feats = forward(detector.network, batch)
    diffs = feats - detector.network.center
    return np.sum(diffs * diffs, axis=1)


def classify(detector, batch, threshold):
    if not np.isfinite(threshold):
        raise DataError("threshold must be finite")
    return (score(detector, batch) > threshold).astype(np.uint8)


def _cluster_mask(feats, cfg, seed, warm_assignments=None):
    """Returns (dominant-cluster mask, kmeans assignments or None)."""
    if cfg.clustering == "none":
        return np.ones(len(feats), dtype=bool), None
    if cfg.clustering == "kmeans":
        model = fit_kmeans(feats, cfg.k, seed, cfg.cluster_max_iter, cfg.cluster_tol,
                           init_assignments=warm_assignments, restarts=cfg.cluster_restarts)
    elif cfg.clustering == "gmm":
        model = fit_gmm(feats, cfg.k, seed, max_iter=max(cfg.cluster_max_iter, 50), tol=cfg.cluster_tol)
    elif cfg.clustering == "meanshift":
        bw = cfg.bandwidth
        if bw is None:
            bw = median_heuristic_bandwidths(feats, scales=(1.0,))[0]
        model = fit_meanshift(feats, bw, seed, max_iter=cfg.cluster_max_iter)
    else:
        model = fit_knn_filter(feats, cfg.knn_k, cfg.keep_fraction)
    assignments = model.assignments if cfg.clustering == "kmeans" else None
    return model.assignments == model.dominant, assignments


def _normalize_rows(x):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return x / norms


def _fit(net, src_feats, base_view, aux_view, cfg):
    """Label-blind optimization core. Returns (net, per-epoch log entries,
    per-epoch selection masks); masks has one extra entry when epochs == 0."""
    xs = src_feats
    xb = base_view.features.astype(np.float64)
    xa = aux_view.features.astype(np.float64)
    n_s, n_t = len(xs), len(xb)
    rng = np.random.default_rng([cfg.seed, 1])

    warm = {"assignments": None}

    def current_mask(epoch):
        if cfg.mode == "few_shot":
            shots = np.asarray(cfg.few_shot_ids, dtype=np.uint64)
            mask = np.isin(base_view.ids, shots)
            if mask.sum() != len(set(cfg.few_shot_ids)):
                raise ConfigError("few_shot_ids contains ids missing from the target")
            return mask
        if cfg.cluster_space == "aux":
            feats = _normalize_rows(xa) if cfg.normalize_aux else xa
        else:
            feats = forward(net, xb)
        mask, assignments = _cluster_mask(
            feats, cfg, seed=np.random.default_rng([cfg.seed, 2, epoch]).integers(2**31),
            warm_assignments=warm["assignments"])
        warm["assignments"] = assignments
        return mask

    # synthetic negative rows (few-shot option) extend the base matrix
    xb_ext = xb
    synth_rows = np.array([], dtype=np.intp)
    if cfg.mode == "few_shot" and cfg.few_shot_synthetic_negatives:
        shot_mask = np.isin(base_view.ids, np.asarray(cfg.few_shot_ids, dtype=np.uint64))
        noise_rng = np.random.default_rng([cfg.seed, 3])
        shots = xb[shot_mask]
        scale = 3.0 * float(np.std(shots)) if len(shots) else 1.0
        synth = shots + noise_rng.normal(0.0, max(scale, 1e-3), size=shots.shape)
        xb_ext = np.concatenate([xb, synth])
        synth_rows = np.arange(n_t, n_t + len(synth))

    bs_src = min(cfg.batch_size, n_s)
    steps_per_epoch = max(1, math.ceil(n_s / bs_src))
    opt = OptimizerState(cfg.base_lr, cfg.weight_decay,
                         total_steps=max(1, cfg.epochs * steps_per_epoch),
                         momentum=cfg.momentum)

    mask = current_mask(0)
    log, masks = [], []
    recluster = cfg.cluster_space == "base"  # aux selection is frozen, so one fit suffices

    for epoch in range(cfg.epochs):
        if epoch > 0 and recluster:
            mask = current_mask(epoch)
        sel_rows = np.flatnonzero(mask)
        rej_rows = np.concatenate([np.flatnonzero(~mask), synth_rows]).astype(np.intp)
        rej_all = np.arange(n_t)
        fallback = None
        if cfg.alignment == "contrastive" and len(rej_rows) == 0 and cfg.empty_negative_policy != "skip":
            fallback = cfg.empty_negative_policy

        ad_sum, uda_sum, skipped = 0.0, 0.0, 0
        perm = rng.permutation(n_s)
        for step in range(steps_per_epoch):
            src_idx = perm[step * bs_src : (step + 1) * bs_src]
            f_src, cache_s = forward(net, xs[src_idx], want_cache=True)
            l_ad = dsvdd_loss(f_src, net.center)

            l_uda = LossValue(0.0, {})
            cache_v = cache_w = None
            if cfg.alignment != "none":
                sel_b = sel_rows[rng.choice(len(sel_rows), size=min(cfg.batch_size, len(sel_rows)), replace=False)]
                if cfg.alignment == "contrastive":
                    if fallback == "attract":
                        f_sel, cache_v = forward(net, xb_ext[sel_b], want_cache=True)
                        l_uda = attraction_loss(f_src, f_sel, cfg.tau)
                    elif fallback == "moment":
                        f_sel, cache_v = forward(net, xb_ext[sel_b], want_cache=True)
                        l_uda = moment_match_loss(f_src, f_sel)
                    elif fallback == "centroid":
                        f_sel, cache_v = forward(net, xb_ext[sel_b], want_cache=True)
                        l_uda = centroid_pull_loss(f_src, f_sel)
                    elif fallback == "infonce":
                        neg_b = rej_all[rng.choice(n_t, size=min(cfg.batch_size, n_t), replace=False)]
                        f_sel, cache_v = forward(net, xb_ext[sel_b], want_cache=True)
                        f_neg, cache_w = forward(net, xb_ext[neg_b], want_cache=True)
                        l_uda = uda_loss(f_src, f_sel, f_neg, cfg.tau, include_positive=True)
                    elif len(rej_rows) == 0:
                        skipped += 1
                    else:
                        neg_b = rej_rows[rng.choice(len(rej_rows), size=min(cfg.batch_size, len(rej_rows)), replace=False)]
                        f_sel, cache_v = forward(net, xb_ext[sel_b], want_cache=True)
                        f_neg, cache_w = forward(net, xb_ext[neg_b], want_cache=True)
                        l_uda = uda_loss(f_src, f_sel, f_neg, cfg.tau,
                                         include_positive=cfg.include_positive_in_denominator)
                else:  # mmd
                    if len(src_idx) < 2 or len(sel_b) < 2:
                        skipped += 1
                    else:
                        f_sel, cache_v = forward(net, xb_ext[sel_b], want_cache=True)
                        bws = median_heuristic_bandwidths(np.concatenate([f_src, f_sel]), cfg.mmd_scales)
                        raw = mmd_loss(f_src, f_sel, bws)
                        l_uda = LossValue(raw.value, {"source": raw.grads["source"],
                                                      "selected": raw.grads["target"]})

            total = total_loss(l_ad, l_uda, cfg.lambda1, cfg.lambda2)
            grads = backward(net, cache_s, total.grads["source"])
            if cache_v is not None and "selected" in total.grads:
                grads += backward(net, cache_v, total.grads["selected"])
            if cache_w is not None and "negatives" in total.grads and not cfg.stop_gradient_negatives:
                grads += backward(net, cache_w, total.grads["negatives"])
            sgd_step(net, grads, opt)
            ad_sum += l_ad.value
            uda_sum += l_uda.value

        if cfg.alignment != "none" and skipped * 2 >= steps_per_epoch and skipped > 0:
            raise TrainingError(
                f"epoch {epoch}: {skipped}/{steps_per_epoch} batches had no usable "
                f"negative pool; fix clustering/alignment configuration")
        if cfg.recenter_every_epoch:
            net.center = forward(net, xs).mean(axis=0)
        log.append({
            "epoch": epoch,
            "l_ad": ad_sum / steps_per_epoch,
            "l_uda": uda_sum / max(1, steps_per_epoch - skipped),
            "lr": opt.current_lr(),
            "selected_count": int(mask.sum()),
            "uda_batches_skipped": skipped,
        })
        masks.append(mask.copy())

    if not masks:  # epochs == 0: still expose the initial selection
        masks.append(mask.copy())
    return net, log, masks
