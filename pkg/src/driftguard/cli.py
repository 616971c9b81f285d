"""Command-line entry point: dataset generation, training, evaluation,
and the sweep/ablation experiments, all reproducible from a config file
plus a seed.

Exit codes: 0 success, 2 config/spec error, 3 training error, 4 I/O error.
"""
import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as dmod
from . import evaluation as emod
from .errors import ConfigError, DriftGuardError, TrainingError
from .projector import forward, load_network, save_network
from .trainer import TrainingConfig, train

CONFIG_PATH_KEYS = ("spec", "source", "target_base", "target_aux")


def _pool_size():
    raw = os.environ.get("DRIFTGUARD_THREADS", "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError as exc:
            raise ConfigError(f"DRIFTGUARD_THREADS must be an integer, got {raw!r}") from exc
    return min(4, os.cpu_count() or 1)


def _atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(f"{path.name}.tmp.{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _parse_overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _split_experiment_config(obj, overrides):
    """An experiment config is flat: data location keys plus TrainingConfig
    keys. Returns (paths dict, TrainingConfig)."""
    merged = dict(obj)
    for key, value in overrides.items():
        merged[key] = value
    merged.pop("version", None)
    paths = {k: merged.pop(k) for k in CONFIG_PATH_KEYS if k in merged}
    cfg = TrainingConfig.from_json(merged)
    return paths, cfg


def _load_spec(paths, overrides):
    if "spec" not in paths:
        raise ConfigError("this command needs a 'spec' entry pointing at a synthetic spec file")
    spec_obj = _load_json(paths["spec"])
    for key, value in overrides.items():
        spec_obj[key] = value
    return dmod.SyntheticShiftSpec.from_json(spec_obj)


def _ext(fmt):
    return "emb" if fmt == "binary" else "csv"


def cmd_gen(args):
    spec_obj = _load_json(args.config)
    for key, value in _parse_overrides(args.set).items():
        spec_obj[key] = value
    spec = dmod.SyntheticShiftSpec.from_json(spec_obj)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    source, target = dmod.generate_synthetic_pair(spec)

    ext = _ext(args.format)
    files = {
        "source": f"source.{ext}",
        "target_base": f"target_base.{ext}",
        "target_aux": f"target_aux.{ext}",
        "labels": "labels.json",
    }

    def save_atomic(ds, name):
        tmp = out / f"{name}.tmp.{os.getpid()}"
        dmod.save_dataset(ds, tmp, args.format)
        os.replace(tmp, out / name)

    save_atomic(source, files["source"])
    save_atomic(target.base.without_labels(), files["target_base"])
    save_atomic(target.aux.without_labels(), files["target_aux"])
    dmod.save_labels_sidecar(out / files["labels"], target.base.ids, target.base.labels)
    manifest = {
        "version": 1,
        "config_hash": emod.config_hash(spec.to_json()),
        "format": args.format,
        "files": files,
        "spec": spec.to_json(),
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print(f"wrote {len(files)} artifacts to {out}")
    return 0


def _load_training_data(paths, fmt):
    if "spec" in paths:
        spec = dmod.SyntheticShiftSpec.from_json(_load_json(paths["spec"]))
        return dmod.generate_synthetic_pair(spec)
    missing = [k for k in ("source", "target_base", "target_aux") if k not in paths]
    if missing:
        raise ConfigError(f"config needs either 'spec' or dataset paths; missing {missing}")
    source = dmod.load_dataset(paths["source"], fmt, domain="source")
    base = dmod.load_dataset(paths["target_base"], fmt)
    aux = dmod.load_dataset(paths["target_aux"], fmt)
    return source, dmod.PairedTargetSet.aligned(base, aux)


def cmd_train(args):
    paths, cfg = _split_experiment_config(_load_json(args.config), _parse_overrides(args.set))
    source, target = _load_training_data(paths, args.format)
    detector = train(source, target, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_network(detector.network, out / "checkpoint.net", config_hash=detector.config_hash)
    lines = [json.dumps({"config_hash": detector.config_hash, "config": cfg.to_json()}, sort_keys=True)]
    lines += [json.dumps(entry, sort_keys=True) for entry in detector.log]
    _atomic_write(out / "train_log.jsonl", "\n".join(lines) + "\n")
    print(f"trained {cfg.epochs} epochs; checkpoint at {out / 'checkpoint.net'}")
    return 0


def cmd_eval(args):
    obj = _load_json(args.config)
    for key, value in _parse_overrides(args.set).items():
        obj[key] = value
    for key in ("checkpoint", "data"):
        if key not in obj:
            raise ConfigError(f"eval config needs {key!r}")
    net = load_network(obj["checkpoint"])
    ds = dmod.load_dataset(obj["data"], args.format)
    feats = forward(net, ds.features)
    scores = np.sum((feats - net.center) ** 2, axis=1)

    report = {
        "version": 1,
        "config_hash": emod.config_hash(obj),
        "n": int(ds.n),
        "score_mean": float(scores.mean()),
        "score_max": float(scores.max()),
        "auc": None,
    }
    labels = ds.labels
    if obj.get("labels"):
        sid, slab = dmod.load_labels_sidecar(obj["labels"])
        pos = {int(i): int(l) for i, l in zip(sid, slab)}
        labels = np.array([pos[int(i)] for i in ds.ids], dtype=np.uint8)
    if labels is not None:
        report["auc"] = emod.auc(scores, labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "eval_report.json", json.dumps(report, sort_keys=True, indent=2) + "\n")
    print(f"eval: n={report['n']} auc={report['auc']}")
    return 0


def _parse_seeds(raw):
    seeds = [int(s) for s in raw.split(",") if s != ""]
    if not seeds:
        raise ConfigError("need at least one seed")
    return seeds


def _csv_lines(hash_, header, rows):
    lines = [f"# config_hash={hash_}", ",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def cmd_sweep_ratio(args):
    overrides = _parse_overrides(args.set)
    paths, cfg = _split_experiment_config(_load_json(args.config), overrides)
    spec = _load_spec(paths, {})
    ratios = [float(r) for r in args.ratios.split(",") if r != ""]
    if any(not 0.0 <= r <= 0.95 for r in ratios):
        raise ConfigError("ratios must lie in [0, 0.95]")
    seeds = _parse_seeds(args.seeds)

    def run(ratio):
        return emod.run_experiment(replace(spec, contamination=ratio), cfg, seeds,
                                   experiment=f"ratio={ratio}")

    with ThreadPoolExecutor(max_workers=_pool_size()) as pool:
        reports = list(pool.map(run, ratios))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hash_ = emod.config_hash(cfg.to_json())
    rows = [
        (r, rep.auc_mean, rep.auc_std, rep.cluster_accuracy_mean)
        for r, rep in zip(ratios, reports)
    ]
    _atomic_write(out / "sweep_ratio.csv",
                  _csv_lines(hash_, ("ratio", "auc_mean", "auc_std", "cluster_accuracy_mean"), rows))
    payload = {"version": 1, "config_hash": hash_,
               "cells": {str(r): rep.to_json() for r, rep in zip(ratios, reports)}}
    _atomic_write(out / "sweep_ratio.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"swept {len(ratios)} ratios -> {out / 'sweep_ratio.csv'}")
    return 0


def cmd_sweep_k(args):
    overrides = _parse_overrides(args.set)
    paths, cfg = _split_experiment_config(_load_json(args.config), overrides)
    spec = _load_spec(paths, {})
    ks = []
    for item in args.ks.split(","):
        if item == "":
            continue
        k = int(item)
        if k < 1:
            raise ConfigError("ks must be >= 1")
        if k not in ks:
            ks.append(k)
    seeds = _parse_seeds(args.seeds)

    def run(k):
        try:
            return emod.run_experiment(spec, replace(cfg, k=k), seeds, experiment=f"k={k}")
        except DriftGuardError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=_pool_size()) as pool:
        results = list(pool.map(run, ks))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hash_ = emod.config_hash(cfg.to_json())
    rows, cells = [], {}
    for k, res in zip(ks, results):
        if isinstance(res, Exception):
            cells[str(k)] = {"error": str(res)}
        else:
            rows.append((k, res.auc_mean, res.auc_std))
            cells[str(k)] = res.to_json()
    _atomic_write(out / "sweep_k.csv", _csv_lines(hash_, ("k", "auc_mean", "auc_std"), rows))
    payload = {"version": 1, "config_hash": hash_, "cells": cells}
    _atomic_write(out / "sweep_k.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"swept {len(ks)} k values -> {out / 'sweep_k.csv'}")
    return 0


ABLATION_MODES = {
    "no-adapt": {"alignment": "none"},
    "adapt-no-cluster": {"clustering": "none"},
    "adapt-cluster-base": {"clustering": "kmeans", "cluster_space": "base"},
    "adapt-cluster-aux": {"clustering": "kmeans", "cluster_space": "aux"},
}
ABLATION_CLUSTERINGS = ("gmm", "meanshift", "knn_filter")


def ablation_grid(cfg):
    """Core 4x2 grid (pipeline mode x alignment loss) plus one cell per
    alternative clustering algorithm in the full-pipeline setting."""
    cells = {}
    for mode, tweaks in ABLATION_MODES.items():
        for align in ("contrastive", "mmd"):
            cell_tweaks = dict(tweaks)
            if mode != "no-adapt":
                cell_tweaks["alignment"] = align
            cells[f"{mode}|{align}"] = replace(cfg, **cell_tweaks)
    for algo in ABLATION_CLUSTERINGS:
        cells[f"cluster-{algo}|contrastive"] = replace(
            cfg, clustering=algo, cluster_space="aux", alignment="contrastive")
    return cells


def cmd_ablate(args):
    overrides = _parse_overrides(args.set)
    paths, cfg = _split_experiment_config(_load_json(args.config), overrides)
    spec = _load_spec(paths, {})
    seeds = _parse_seeds(args.seeds)
    cells = ablation_grid(cfg)

    def run(item):
        name, cell_cfg = item
        try:
            return name, emod.run_experiment(spec, cell_cfg, seeds, experiment=name)
        except DriftGuardError as exc:
            return name, exc

    with ThreadPoolExecutor(max_workers=_pool_size()) as pool:
        results = list(pool.map(run, cells.items()))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"version": 1, "config_hash": emod.config_hash(cfg.to_json()), "cells": {}}
    for name, res in results:
        payload["cells"][name] = {"error": str(res)} if isinstance(res, Exception) else res.to_json()
    _atomic_write(out / "ablation.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")
    ok = sum(1 for _, r in results if not isinstance(r, Exception))
    print(f"ablation: {ok}/{len(results)} cells -> {out / 'ablation.json'}")
    return 0


def cmd_export_report(args):
    src = Path(args.config)
    if not src.is_dir():
        raise ConfigError(f"export-report expects --config to be a directory, got {src}")
    combined = {"version": 1, "reports": {}}
    for path in sorted(src.rglob("*.json")):
        try:
            combined["reports"][str(path.relative_to(src))] = _load_json(path)
        except json.JSONDecodeError:
            continue
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "combined_report.json", json.dumps(combined, sort_keys=True, indent=2) + "\n")
    print(f"collected {len(combined['reports'])} reports")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="driftguard",
                                     description="Domain-adaptive one-class anomaly detection on embedding files")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds=False):
        p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--format", choices=("binary", "csv"), default="binary")
        if seeds:
            p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated run seeds")

    common(sub.add_parser("gen", help="generate a synthetic source/target pair"))
    common(sub.add_parser("train", help="train a detector"))
    common(sub.add_parser("eval", help="score a dataset with a checkpoint"))
    p = sub.add_parser("sweep-ratio", help="vary the target anomaly ratio")
    common(p, seeds=True)
    p.add_argument("--ratios", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    p = sub.add_parser("sweep-k", help="vary the number of clustering components")
    common(p, seeds=True)
    p.add_argument("--ks", default="1,2,4,8")
    p = sub.add_parser("ablate", help="run the component/alignment/clustering ablation grid")
    common(p, seeds=True)
    common(sub.add_parser("export-report", help="merge report JSONs from a directory"))
    return parser


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-ratio": cmd_sweep_ratio,
    "sweep-k": cmd_sweep_k,
    "ablate": cmd_ablate,
    "export-report": cmd_export_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except DriftGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
