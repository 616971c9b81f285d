"""Export pipeline: a class-per-directory image folder becomes a pair of
index-aligned embedding files (base and aux streams) plus a one-vs-all
labels sidecar for evaluation.

Ids are indices into the sorted list of relative image paths, so they are
stable across runs. Labels never enter the target-role feature files.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .encoders import load_encoder
from .formats import write_embeddings, write_labels_sidecar

log = logging.getLogger("embexport")

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}


@dataclass
class ExportManifest:
    root: Path
    normal_class: str
    base_encoder: str
    aux_encoder: str
    out_dir: Path
    role: str = "target"  # "target": full folder, label-free files + sidecar
    #                       "source": normal class only, zero labels in-file
    images: list = field(default_factory=list)  # (id, relative path, label)

    def discover(self):
        classes = sorted(p.name for p in self.root.iterdir() if p.is_dir())
        if self.normal_class not in classes:
            raise FileNotFoundError(f"normal class {self.normal_class!r} not under {self.root}")
        rel_paths = sorted(
            p.relative_to(self.root)
            for p in self.root.rglob("*")
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        self.images = []
        for i, rel in enumerate(rel_paths):
            label = 0 if rel.parts[0] == self.normal_class else 1
            if self.role == "source" and label == 1:
                continue
            self.images.append((i, rel, label))
        if not self.images:
            raise FileNotFoundError(f"no images found under {self.root}")
        return self


def export(manifest):
    """Encode every image with both encoders and write the embedding files.
    Undecodable images are skipped (logged with their id). Returns the
    manifest dictionary that was written alongside the outputs."""
    base_enc = load_encoder(manifest.base_encoder)
    aux_enc = load_encoder(manifest.aux_encoder)
    manifest.out_dir.mkdir(parents=True, exist_ok=True)

    ids, labels, base_rows, aux_rows, skipped = [], [], [], [], []
    for img_id, rel, label in manifest.images:
        path = manifest.root / rel
        try:
            with Image.open(path) as img:
                img.load()
                base_rows.append(base_enc.encode(img))
                aux_rows.append(aux_enc.encode(img))
        except (UnidentifiedImageError, OSError) as exc:
            log.warning("skipping undecodable image id=%d (%s): %s", img_id, rel, exc)
            skipped.append(img_id)
            continue
        ids.append(img_id)
        labels.append(label)

    if not ids:
        raise FileNotFoundError("every image failed to decode")
    ids = np.asarray(ids, dtype=np.uint64)
    labels = np.asarray(labels, dtype=np.uint8)
    base = np.vstack(base_rows).astype(np.float32)
    aux = np.vstack(aux_rows).astype(np.float32)

    if manifest.role == "source":
        write_embeddings(manifest.out_dir / "source.emb", base, ids, "source", labels=labels)
        files = {"source": "source.emb"}
    else:
        write_embeddings(manifest.out_dir / "target_base.emb", base, ids, "target")
        write_embeddings(manifest.out_dir / "target_aux.emb", aux, ids, "target")
        write_labels_sidecar(manifest.out_dir / "labels.json", ids, labels)
        files = {"target_base": "target_base.emb", "target_aux": "target_aux.emb",
                 "labels": "labels.json"}

    record = {
        "version": 1,
        "role": manifest.role,
        "root": str(manifest.root),
        "normal_class": manifest.normal_class,
        "base_encoder": manifest.base_encoder,
        "aux_encoder": manifest.aux_encoder,
        "n_exported": int(len(ids)),
        "skipped_ids": skipped,
        "files": files,
    }
    with open(manifest.out_dir / "export_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return record
