"""Embedding datasets, their on-disk formats, contamination sampling, and
the synthetic domain-shift generator.

Feature matrices are stored float32 (the wire dtype); numerical code
upcasts to float64 at its own boundaries. All dataset objects are
immutable after construction.
"""
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import CapacityError, DataError, FormatError, SpecError

MAGIC = b"EMB1"
DOMAINS = ("source", "target")


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EmbeddingDataset:
    """N x D feature matrix with stable ids, a domain tag, and optional
    binary labels (0 = normal, 1 = anomaly)."""

    features: np.ndarray
    ids: np.ndarray
    domain: str
    labels: np.ndarray | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float32)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-D matrix, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise DataError("features contain non-finite values")
        ids = np.asarray(self.ids, dtype=np.uint64)
        if ids.shape != (feats.shape[0],):
            raise DataError("ids must be one per row")
        if len(np.unique(ids)) != len(ids):
            raise DataError("duplicate ids")
        if self.domain not in DOMAINS:
            raise DataError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.uint8)
            if labels.shape != (feats.shape[0],):
                raise DataError("labels must be one per row")
            if not np.all((labels == 0) | (labels == 1)):
                raise DataError("labels must be 0 or 1")
            object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "ids", _frozen(ids))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def without_labels(self):
        """Label-free view used by the training path."""
        if self.labels is None:
            return self
        return replace(self, labels=None)


@dataclass(frozen=True)
class PairedTargetSet:
    """Two index-aligned representations of the same target rows: ``base``
    feeds the trainable extractor, ``aux`` is the frozen embedding used for
    clustering. Row i of base and aux describe the same sample."""

    base: EmbeddingDataset
    aux: EmbeddingDataset

    def __post_init__(self):
        if self.base.n != self.aux.n:
            raise DataError("base and aux must have the same number of rows")
        if not np.array_equal(self.base.ids, self.aux.ids):
            raise DataError("base and aux ids must match row-for-row")

    @property
    def n(self):
        return self.base.n

    @property
    def labels(self):
        return self.base.labels

    def without_labels(self):
        return PairedTargetSet(self.base.without_labels(), self.aux.without_labels())

    @staticmethod
    def aligned(base, aux):
        """Pair two datasets, reordering aux rows to base's id order."""
        if sorted(base.ids.tolist()) != sorted(aux.ids.tolist()):
            raise DataError("base and aux id sets differ")
        pos = {int(i): p for p, i in enumerate(aux.ids)}
        order = np.array([pos[int(i)] for i in base.ids], dtype=np.intp)
        aux2 = EmbeddingDataset(
            aux.features[order],
            aux.ids[order],
            aux.domain,
            None if aux.labels is None else aux.labels[order],
        )
        return PairedTargetSet(base, aux2)


# ---------------------------------------------------------------------------
# On-disk formats


def save_dataset(dataset, path, format="binary"):
    """Write a dataset. Binary round-trips are bit-exact; csv round-trips
    within printed precision."""
    if format == "binary":
        _save_binary(dataset, path)
    elif format == "csv":
        _save_csv(dataset, path)
    else:
        raise FormatError(f"unknown format {format!r}")


def load_dataset(path, format="binary", domain=None):
    """Load a dataset. Binary files carry their domain tag; csv files do
    not, so ``domain`` (default "target") applies there."""
    if format == "binary":
        return _load_binary(path)
    if format == "csv":
        return _load_csv(path, domain=domain or "target")
    raise FormatError(f"unknown format {format!r}")


def _save_binary(ds, path):
    header = json.dumps(
        {"n": ds.n, "d": ds.dim, "domain": ds.domain, "has_labels": ds.labels is not None},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(ds.features, dtype="<f4").tobytes())
        if ds.labels is not None:
            fh.write(ds.labels.astype(np.uint8).tobytes())
        fh.write(np.ascontiguousarray(ds.ids, dtype="<u8").tobytes())


def _load_binary(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
        n, d = int(header["n"]), int(header["d"])
        domain = header["domain"]
        has_labels = bool(header["has_labels"])
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: bad header: {exc}") from exc
    off = 8 + hlen
    need = n * d * 4 + (n if has_labels else 0) + n * 8
    if len(blob) - off != need:
        raise FormatError(f"{path}: payload length {len(blob) - off}, expected {need}")
    feats = np.frombuffer(blob, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    off += n * d * 4
    labels = None
    if has_labels:
        labels = np.frombuffer(blob, dtype=np.uint8, count=n, offset=off)
        off += n
    ids = np.frombuffer(blob, dtype="<u8", count=n, offset=off)
    return EmbeddingDataset(feats, ids, domain, labels)


def _save_csv(ds, path):
    cols = ",".join(f"f{i}" for i in range(ds.dim))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"id,label,{cols}\n")
        labels = ds.labels if ds.labels is not None else np.full(ds.n, -1, dtype=np.int64)
        for i in range(ds.n):
            row = ",".join(repr(float(v)) for v in ds.features[i])
            fh.write(f"{int(ds.ids[i])},{int(labels[i])},{row}\n")


def _load_csv(path, domain="target"):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[:2] != ["id", "label"]:
        raise FormatError(f"{path}: expected header id,label,f0..")
    d = len(header) - 2
    ids, labels, rows = [], [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != d + 2:
            raise FormatError(f"{path}: row has {len(parts)} fields, expected {d + 2}")
        ids.append(int(parts[0]))
        labels.append(int(parts[1]))
        rows.append([float(v) for v in parts[2:]])
    labels = np.asarray(labels)
    if np.all(labels == -1):
        lab = None
    elif np.any(labels == -1):
        raise DataError(f"{path}: labels must be all present or all -1")
    else:
        lab = labels
    return EmbeddingDataset(np.asarray(rows, dtype=np.float32), np.asarray(ids), domain, lab)


def save_labels_sidecar(path, ids, labels):
    payload = {"version": 1, "ids": [int(i) for i in ids], "labels": [int(v) for v in labels]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_labels_sidecar(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    ids = np.asarray(payload["ids"], dtype=np.uint64)
    labels = np.asarray(payload["labels"], dtype=np.uint8)
    if ids.shape != labels.shape:
        raise FormatError(f"{path}: ids/labels length mismatch")
    return ids, labels


# ---------------------------------------------------------------------------
# Contamination sampling


def contaminate_target(normals, anomalies, ratio, seed):
    """Mix anomaly rows into a normal set so that the anomaly count equals
    round(ratio * output_size). Rows are copied verbatim; labels ride along
    for evaluation only."""
    if not 0.0 <= ratio < 1.0:
        raise SpecError(f"ratio must be in [0,1), got {ratio}")
    if normals.dim != anomalies.dim:
        raise DataError("normals and anomalies must share a dimension")
    if normals.labels is not None and np.any(normals.labels != 0):
        raise DataError("normals dataset contains anomaly labels")

    n = normals.n
    if ratio == 0.0:
        if normals.labels is not None:
            return normals
        return replace(normals, labels=np.zeros(n, dtype=np.uint8))

    # smallest a >= 0 with a == round(ratio * (n + a))
    a_star = ratio * n / (1.0 - ratio)
    pick = None
    for a in range(max(0, int(np.floor(a_star)) - 2), int(np.ceil(a_star)) + 3):
        if int(np.round(ratio * (n + a))) == a:
            pick = a
            break
    if pick is None:  # cannot happen for ratio < 1, kept as a guard
        raise SpecError(f"no consistent anomaly count for ratio={ratio}, n={n}")
    if pick > anomalies.n:
        raise CapacityError(f"need {pick} anomaly rows, pool has {anomalies.n}")

    rng = np.random.default_rng(seed)
    chosen = rng.choice(anomalies.n, size=pick, replace=False)
    feats = np.concatenate([normals.features, anomalies.features[chosen]])
    labels = np.concatenate([np.zeros(n, dtype=np.uint8), np.ones(pick, dtype=np.uint8)])
    order = rng.permutation(n + pick)
    return EmbeddingDataset(feats[order], np.arange(n + pick), normals.domain, labels[order])


# ---------------------------------------------------------------------------
# Synthetic domain-shift generator


@dataclass(frozen=True)
class AffineShift:
    """Invertible affine map x -> scale * R(x) + translation, where R is a
    product of plane rotations: angle i acts on coordinates (2i, 2i+1)."""

    rotation_angles: tuple = ()
    translation: tuple = ()
    scale: float = 1.0

    def apply(self, x):
        y = np.array(x, dtype=np.float64, copy=True)
        for i, theta in enumerate(self.rotation_angles):
            a, b = 2 * i, 2 * i + 1
            c, s = np.cos(theta), np.sin(theta)
            ya = c * y[:, a] - s * y[:, b]
            yb = s * y[:, a] + c * y[:, b]
            y[:, a], y[:, b] = ya, yb
        y *= self.scale
        if len(self.translation):
            y += np.asarray(self.translation, dtype=np.float64)
        return y


@dataclass(frozen=True)
class SyntheticShiftSpec:
    """Recipe for a source/target pair with a controlled domain shift.

    Components are (mean, scale) isotropic Gaussians; the target applies
    ``shift`` to every sample and contains ``contamination`` anomalies.
    ``aux_dim``/``aux_offset`` control the frozen auxiliary embedding: a
    seeded random projection through tanh plus a class-informative offset
    (the knob that makes the aux space more discriminative than the base).
    """

    dim: int
    normal_components: tuple
    anomaly_components: tuple
    shift: AffineShift
    contamination: float
    n_source: int
    n_target: int
    seed: int
    aux_dim: int = 24
    aux_offset: float = 4.0

    def validate(self):
        if self.dim < 1:
            raise SpecError("dim must be >= 1")
        if not self.normal_components or not self.anomaly_components:
            raise SpecError("component lists must be non-empty")
        for mean, scale in list(self.normal_components) + list(self.anomaly_components):
            if len(mean) != self.dim:
                raise SpecError("component mean has wrong dimension")
            if scale <= 0:
                raise SpecError("component scale must be positive")
        for nm, _ in self.normal_components:
            for am, _ in self.anomaly_components:
                if np.allclose(nm, am):
                    raise SpecError("normal and anomaly component means must be distinct")
        if not 0.0 <= self.contamination <= 0.95:
            raise SpecError("contamination must be in [0, 0.95]")
        if self.shift.scale <= 0:
            raise SpecError("shift scale must be positive")
        if 2 * len(self.shift.rotation_angles) > self.dim:
            raise SpecError("too many rotation planes for dim")
        if len(self.shift.translation) not in (0, self.dim):
            raise SpecError("translation has wrong dimension")
        if self.n_source < 1 or self.n_target < 1:
            raise SpecError("sample counts must be >= 1")
        if self.aux_dim < 1:
            raise SpecError("aux_dim must be >= 1")

    def to_json(self):
        return {
            "version": 1,
            "dim": self.dim,
            "normal_components": [{"mean": list(map(float, m)), "scale": float(s)} for m, s in self.normal_components],
            "anomaly_components": [{"mean": list(map(float, m)), "scale": float(s)} for m, s in self.anomaly_components],
            "shift": {
                "rotation_angles": list(map(float, self.shift.rotation_angles)),
                "translation": list(map(float, self.shift.translation)),
                "scale": float(self.shift.scale),
            },
            "contamination": float(self.contamination),
            "n_source": int(self.n_source),
            "n_target": int(self.n_target),
            "seed": int(self.seed),
            "aux_dim": int(self.aux_dim),
            "aux_offset": float(self.aux_offset),
        }

    @staticmethod
    def from_json(obj):
        known = {
            "version", "dim", "normal_components", "anomaly_components", "shift",
            "contamination", "n_source", "n_target", "seed", "aux_dim", "aux_offset",
        }
        unknown = set(obj) - known
        if unknown:
            raise SpecError(f"unknown spec keys: {sorted(unknown)}")
        try:
            shift = AffineShift(
                tuple(obj["shift"].get("rotation_angles", ())),
                tuple(obj["shift"].get("translation", ())),
                float(obj["shift"].get("scale", 1.0)),
            )
            spec = SyntheticShiftSpec(
                dim=int(obj["dim"]),
                normal_components=tuple((tuple(c["mean"]), float(c["scale"])) for c in obj["normal_components"]),
                anomaly_components=tuple((tuple(c["mean"]), float(c["scale"])) for c in obj["anomaly_components"]),
                shift=shift,
                contamination=float(obj["contamination"]),
                n_source=int(obj["n_source"]),
                n_target=int(obj["n_target"]),
                seed=int(obj["seed"]),
                aux_dim=int(obj.get("aux_dim", 24)),
                aux_offset=float(obj.get("aux_offset", 4.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError(f"bad spec file: {exc}") from exc
        spec.validate()
        return spec


def default_benchmark_spec(seed=0, contamination=0.1, dim=16, n_source=2048, n_target=600):
    """The desk-scale benchmark used by the sweep commands and the tests.

    Geometry: the shift carries target normals to a shell of radius r
    around the off-origin source class; anomalies mix three modes around
    that shell (see the component comments below). A detector compacted on
    the source alone misranks the target classes, alignment alone fixes
    only part of the mix, and selection plus repulsion separates it.
    """
    if dim < 6:
        raise SpecError("default benchmark needs dim >= 6")
    angles = (0.5, -0.4)
    scale = 1.15
    mean_n = np.zeros(dim)
    mean_n[4] = 3.0  # off-origin source class, outside the rotation planes
    translation = np.zeros(dim)
    translation[1], translation[2] = 3.0, -4.0
    shift = AffineShift(rotation_angles=angles, translation=tuple(translation), scale=scale)

    # target normals land at c_tn, a radius-r shell away from the source
    # class. Anomalies mix three modes (weighted 5:2:1), each probing one
    # failure mode of the pipeline:
    #  - "inside": on the 60-degree ray but at 0.55 r, between the source
    #    region and the shell. Alignment without repulsion leaves these
    #    within the hypersphere; they also invert the source-only ranking.
    #  - "far": on the shell at 60 degrees, collinear with "inside", so
    #    base-space clustering groups the two anomaly modes naturally.
    #  - "near": right beside the normal cluster (3 sigma sideways). Only
    #    the class-aware aux embedding separates it; base-space selection
    #    carries it along.
    sigma = 0.45
    c_tn = shift.apply(mean_n[None, :])[0]
    delta_n = c_tn - mean_n
    r = np.linalg.norm(delta_n)
    n_hat = delta_n / r
    u = np.zeros(dim)
    u[0] = 1.0  # orthogonal to delta_n by construction
    phi = np.deg2rad(60.0)
    ray = np.cos(phi) * n_hat + np.sin(phi) * u
    u2 = np.zeros(dim)
    u2[3] = 1.0  # orthogonal to delta_n and u
    c_inside = mean_n + 0.55 * r * ray
    c_far = mean_n + r * ray
    c_near = c_tn + 3.0 * sigma * u2
    undo = AffineShift(rotation_angles=tuple(-a for a in angles), translation=(), scale=1.0)
    # components are drawn uniformly; repeats set the 5:2:1 mode weights
    modes = (c_inside,) * 5 + (c_far,) * 2 + (c_near,)
    anomaly_components = tuple(
        (tuple(undo.apply(((c - translation) / scale)[None, :])[0]), sigma)
        for c in modes
    )
    return SyntheticShiftSpec(
        dim=dim,
        normal_components=((tuple(mean_n), sigma),),
        anomaly_components=anomaly_components,
        shift=shift,
        contamination=contamination,
        n_source=n_source,
        n_target=n_target,
        seed=seed,
    )


def _sample_mixture(rng, components, n, dim):
    comp = rng.integers(0, len(components), size=n)
    out = np.empty((n, dim), dtype=np.float64)
    for k, (mean, scale) in enumerate(components):
        rows = np.flatnonzero(comp == k)
        out[rows] = np.asarray(mean, dtype=np.float64) + scale * rng.standard_normal((len(rows), dim))
    return out


def generate_synthetic_pair(spec):
    """Draw (source, target) for a spec. The source is normal-only; the
    target carries ground-truth labels for evaluation and a frozen aux
    embedding in which the two classes separate more cleanly than in the
    base space."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    # frozen aux map parameters come first so sample counts don't change it
    proj = rng.standard_normal((spec.aux_dim, spec.dim)) / np.sqrt(spec.dim)
    dirs = np.linalg.qr(rng.standard_normal((spec.aux_dim, 2)))[0].T
    normal_dir, anom_dir = dirs[0], dirs[1]

    src = _sample_mixture(rng, spec.normal_components, spec.n_source, spec.dim)

    n_anom = int(np.round(spec.contamination * spec.n_target))
    n_norm = spec.n_target - n_anom
    tgt_norm = _sample_mixture(rng, spec.normal_components, n_norm, spec.dim)
    tgt_anom = _sample_mixture(rng, spec.anomaly_components, n_anom, spec.dim)
    base = spec.shift.apply(np.concatenate([tgt_norm, tgt_anom]))
    labels = np.concatenate([np.zeros(n_norm, dtype=np.uint8), np.ones(n_anom, dtype=np.uint8)])
    order = rng.permutation(spec.n_target)
    base, labels = base[order], labels[order]

    # the aux map is a fixed function of the shift spec: random features,
    # centered on the nominal normal-target location so tanh stays in range,
    # plus a class-coherent direction (how a discriminative frozen encoder
    # behaves) whose strength is the aux_offset knob
    normal_center = np.mean([np.asarray(m, dtype=np.float64) for m, _ in spec.normal_components], axis=0)
    aux_center = spec.shift.apply(normal_center[None, :])[0]
    aux = np.tanh((base - aux_center) @ proj.T)
    aux[labels == 0] += spec.aux_offset * normal_dir
    aux[labels == 1] += spec.aux_offset * anom_dir

    ids = np.arange(spec.n_target)
    source = EmbeddingDataset(src.astype(np.float32), np.arange(spec.n_source), "source",
                              np.zeros(spec.n_source, dtype=np.uint8))
    target = PairedTargetSet(
        EmbeddingDataset(base.astype(np.float32), ids, "target", labels),
        EmbeddingDataset(aux.astype(np.float32), ids, "target", labels),
    )
    return source, target
