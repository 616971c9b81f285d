"""Writers for the embedding wire format consumed by the training
pipeline.

Binary layout: magic "EMB1", little-endian uint32 header length, UTF-8
JSON header {"n", "d", "domain", "has_labels"}, n*d little-endian float32
row-major, optionally n label bytes, then n little-endian uint64 ids.
"""
import json
import struct

import numpy as np

MAGIC = b"EMB1"


def write_embeddings(path, features, ids, domain, labels=None):
    feats = np.ascontiguousarray(features, dtype="<f4")
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise ValueError("features must be a non-empty matrix")
    if not np.all(np.isfinite(feats)):
        raise ValueError("features must be finite")
    ids = np.ascontiguousarray(ids, dtype="<u8")
    header = json.dumps(
        {"n": int(feats.shape[0]), "d": int(feats.shape[1]),
         "domain": domain, "has_labels": labels is not None},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(feats.tobytes())
        if labels is not None:
            fh.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())
        fh.write(ids.tobytes())


def write_labels_sidecar(path, ids, labels):
    payload = {"version": 1, "ids": [int(i) for i in ids], "labels": [int(v) for v in labels]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")
