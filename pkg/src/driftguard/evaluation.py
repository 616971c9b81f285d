"""Threshold-free detection metrics and experiment aggregation."""
import hashlib
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, UndefinedMetricError


def auc(scores, labels):
    """Rank-based AUC with midrank tie handling, O(N log N).

    Equals P(score_anomaly > score_normal) + 0.5 * P(equal).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError("scores and labels must be equal-length vectors")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[order[j + 1]] == s[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[y == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def cluster_accuracy(selection, labels):
    """Fraction of rows correctly split by the selection: normals kept plus
    anomalies rejected, over all rows. Labels follow the selection's row
    order."""
    y = np.asarray(labels)
    if y.shape != selection.selected_mask.shape:
        raise DataError("labels length does not match selection")
    correct = ((y == 0) & selection.selected_mask) | ((y == 1) & ~selection.selected_mask)
    return float(np.mean(correct))


def config_hash(obj):
    """Stable short hash of a JSON-serializable config."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class MetricsReport:
    experiment: str
    config_hash: str
    seeds: tuple
    auc_per_seed: tuple
    cluster_accuracy_per_seed: tuple | None = None
    descriptor: dict | None = None

    @property
    def auc_mean(self):
        return float(np.mean(self.auc_per_seed))

    @property
    def auc_std(self):
        return _sample_std(self.auc_per_seed)

    @property
    def cluster_accuracy_mean(self):
        if self.cluster_accuracy_per_seed is None:
            return None
        return float(np.mean(self.cluster_accuracy_per_seed))

    def to_json(self):
        out = {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "auc": {
                "per_seed": [float(v) for v in self.auc_per_seed],
                "mean": self.auc_mean,
                "std": self.auc_std,
            },
        }
        if self.cluster_accuracy_per_seed is not None:
            out["cluster_accuracy"] = {
                "per_seed": [float(v) for v in self.cluster_accuracy_per_seed],
                "mean": self.cluster_accuracy_mean,
                "std": _sample_std(self.cluster_accuracy_per_seed),
            }
        if self.descriptor is not None:
            out["descriptor"] = self.descriptor
        return out


def _sample_std(values):
    vals = np.asarray(values, dtype=np.float64)
    if len(vals) < 2:
        return 0.0
    return float(np.std(vals, ddof=1))


def write_report(report, path):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def run_experiment(source_spec, cfg, seeds, out_path=None, experiment="experiment"):
    """Train and evaluate once per seed on freshly generated data, then
    aggregate mean and sample (n-1) standard deviation.

    ``source_spec`` is a SyntheticShiftSpec; each run re-seeds both the
    generator and the trainer with the run seed.
    """
    from .data import generate_synthetic_pair
    from .trainer import score, train

    if not seeds:
        raise DataError("need at least one seed")
    aucs, accs = [], []
    for seed in seeds:
        src, tgt = generate_synthetic_pair(replace(source_spec, seed=int(seed)))
        detector = train(src, tgt, replace(cfg, seed=int(seed)))
        scores = score(detector, tgt.base.features)
        aucs.append(auc(scores, tgt.base.labels))
        accs.append(cluster_accuracy(detector.selection, tgt.base.labels))
    report = MetricsReport(
        experiment=experiment,
        config_hash=config_hash(cfg.to_json()),
        seeds=tuple(int(s) for s in seeds),
        auc_per_seed=tuple(aucs),
        cluster_accuracy_per_seed=tuple(accs),
        descriptor={"spec": source_spec.to_json()},
    )
    if out_path is not None:
        write_report(report, out_path)
    return report
