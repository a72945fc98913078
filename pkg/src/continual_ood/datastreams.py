"""Feature containers, the OODF file format, synthetic data and streams.

A ``FeatureSet`` is the data currency of the package: N samples, each
described by one vector per layer. Sample values are stored as float32
(the on-disk precision); numeric code upcasts to float64 when fitting.

Ground-truth labels (0=ID, 1=OOD) may ride along for evaluation and
stream construction. The continual engine refuses labeled input, so the
labels can never leak into training.
"""

import csv
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CorruptionError,
    FormatError,
    InsufficientPoolError,
    InvalidDataError,
    InvalidMatrixError,
    ShapeError,
)

MAGIC = b"OODF"
VERSION = 1


@dataclass(frozen=True)
class FeatureSet:
    """Per-layer feature matrices for N samples, with optional labels."""

    layer_names: tuple
    layers: tuple  # one (n, d_l) float32 array per layer
    labels: Optional[np.ndarray] = None  # (n,) uint8, 0=ID 1=OOD

    def __post_init__(self):
        if len(self.layer_names) != len(self.layers):
            raise ShapeError("layer_names and layers must have equal length")
        if len(self.layers) == 0:
            raise ShapeError("a FeatureSet needs at least one layer")
        n = self.layers[0].shape[0]
        for name, arr in zip(self.layer_names, self.layers):
            if arr.ndim != 2:
                raise ShapeError(f"layer {name!r} is not a 2-D matrix")
            if arr.shape[0] != n:
                raise ShapeError(f"layer {name!r} has inconsistent sample count")
            if arr.dtype != np.float32:
                raise InvalidDataError(f"layer {name!r} must be float32")
            if not np.all(np.isfinite(arr)):
                raise InvalidDataError(f"layer {name!r} contains non-finite values")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise ShapeError("labels length must match the sample count")
            if not np.all(np.isin(self.labels, (0, 1))):
                raise InvalidDataError("labels must be 0 (ID) or 1 (OOD)")

    @property
    def n(self) -> int:
        return self.layers[0].shape[0]

    @property
    def dims(self) -> tuple:
        return tuple(arr.shape[1] for arr in self.layers)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def features_only(self) -> "FeatureSet":
        """The same features without labels."""
        if self.labels is None:
            return self
        return FeatureSet(self.layer_names, self.layers)

    def with_labels(self, labels: np.ndarray) -> "FeatureSet":
        labels = np.asarray(labels, dtype=np.uint8)
        return FeatureSet(self.layer_names, self.layers, labels)

    def subset(self, indices) -> "FeatureSet":
        indices = np.asarray(indices, dtype=np.int64)
        layers = tuple(arr[indices] for arr in self.layers)
        labels = self.labels[indices] if self.labels is not None else None
        return FeatureSet(self.layer_names, layers, labels)

    def concat_layers(self) -> np.ndarray:
        """All layers side by side as one (n, sum d_l) float64 matrix."""
        return np.hstack([arr.astype(np.float64) for arr in self.layers])

    @staticmethod
    def empty_like(other: "FeatureSet") -> "FeatureSet":
        layers = tuple(
            np.empty((0, d), dtype=np.float32) for d in other.dims
        )
        return FeatureSet(other.layer_names, layers)

    @staticmethod
    def concat(sets: Sequence["FeatureSet"]) -> "FeatureSet":
        if not sets:
            raise ShapeError("cannot concatenate zero FeatureSets")
        first = sets[0]
        for fs in sets[1:]:
            if fs.layer_names != first.layer_names or fs.dims != first.dims:
                raise ShapeError("FeatureSets have mismatching layers")
        layers = tuple(
            np.concatenate([fs.layers[i] for fs in sets], axis=0)
            for i in range(first.n_layers)
        )
        if all(fs.labels is not None for fs in sets):
            labels = np.concatenate([fs.labels for fs in sets])
        else:
            labels = None
        return FeatureSet(first.layer_names, layers, labels)

    @staticmethod
    def from_arrays(arrays: Sequence[np.ndarray], names=None, labels=None) -> "FeatureSet":
        """Build from float-like per-layer matrices (cast to float32)."""
        layers = tuple(np.ascontiguousarray(a, dtype=np.float32) for a in arrays)
        if names is None:
            names = tuple(f"layer{i}" for i in range(len(layers)))
        lab = None if labels is None else np.asarray(labels, dtype=np.uint8)
        return FeatureSet(tuple(names), layers, lab)


# ---------------------------------------------------------------------------
# OODF binary format


def write_features(fs: FeatureSet, path) -> None:
    """Write a FeatureSet to the OODF binary layout (little-endian).

    Layout: magic "OODF", u8 version, u32 L, per layer (u16 name length,
    UTF-8 name, u32 d_l), u64 n, u8 has_labels, then n rows of float32
    sample-major layer-minor, then n label bytes if present.
    """
    parts = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", fs.n_layers)]
    for name, d in zip(fs.layer_names, fs.dims):
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise InvalidDataError(f"layer name too long: {name!r}")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", d))
    parts.append(struct.pack("<Q", fs.n))
    parts.append(struct.pack("<B", 1 if fs.labels is not None else 0))
    row_major = np.hstack(fs.layers) if fs.n_layers > 1 else fs.layers[0]
    parts.append(np.ascontiguousarray(row_major, dtype="<f4").tobytes())
    if fs.labels is not None:
        parts.append(fs.labels.astype(np.uint8).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.data):
            raise CorruptionError(f"file truncated while reading {what}", self.offset)
        chunk = self.data[self.offset : self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))[0]


def read_features(path) -> FeatureSet:
    """Read an OODF file written by :func:`write_features`."""
    with open(path, "rb") as fh:
        data = fh.read()
    cur = _Cursor(data)
    magic = cur.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = cur.unpack("<B", "version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    n_layers = cur.unpack("<I", "layer count")
    if n_layers == 0:
        raise FormatError("file declares zero layers")
    names, dims = [], []
    for i in range(n_layers):
        name_len = cur.unpack("<H", f"layer {i} name length")
        names.append(cur.take(name_len, f"layer {i} name").decode("utf-8"))
        dims.append(cur.unpack("<I", f"layer {i} dimension"))
    n = cur.unpack("<Q", "sample count")
    has_labels = cur.unpack("<B", "label flag")
    total_d = int(sum(dims))
    payload = cur.take(4 * n * total_d, "feature payload")
    flat = np.frombuffer(payload, dtype="<f4").reshape(n, total_d)
    layers = []
    col = 0
    for d in dims:
        layers.append(np.ascontiguousarray(flat[:, col : col + d]))
        col += d
    labels = None
    if has_labels:
        labels = np.frombuffer(cur.take(n, "labels"), dtype=np.uint8).copy()
    if cur.offset != len(data):
        raise CorruptionError("trailing bytes after payload", cur.offset)
    return FeatureSet(tuple(names), tuple(layers), labels)


def read_features_csv(path, layer_name: str = "features") -> FeatureSet:
    """Import a single-layer CSV with header ``f0,f1,...[,label]``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("CSV file is empty") from None
        header = [h.strip() for h in header]
        has_label = header and header[-1] == "label"
        feat_cols = header[:-1] if has_label else header
        expected = [f"f{i}" for i in range(len(feat_cols))]
        if feat_cols != expected or not feat_cols:
            raise FormatError(f"CSV header must be f0,f1,...[,label]; got {header}")
        rows, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"CSV line {line_no} has {len(row)} fields")
            rows.append([float(v) for v in row[: len(feat_cols)]])
            if has_label:
                labels.append(int(row[-1]))
    data = np.asarray(rows, dtype=np.float32).reshape(len(rows), len(feat_cols))
    return FeatureSet.from_arrays(
        [data], names=(layer_name,), labels=labels if has_label else None
    )


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture component: a per-layer mean and covariance plus a count."""

    count: int
    means: tuple  # per layer, (d_l,) array-like
    covs: tuple  # per layer, (d_l, d_l) array-like


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidMatrixError(f"covariance must be square, got {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-9 * max(1.0, np.max(np.abs(cov)))):
        raise InvalidMatrixError("covariance is not symmetric")
    eigvals, eigvecs = np.linalg.eigh(cov)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(eigvals))))
    if np.min(eigvals) < -tol:
        raise InvalidMatrixError("covariance is not positive semidefinite")
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def synth_gaussians(
    components: Sequence[GaussianComponent], seed: int, layer_names=None
) -> FeatureSet:
    """Draw a seeded FeatureSet from a per-layer Gaussian mixture spec."""
    if not components:
        raise ShapeError("at least one component is required")
    n_layers = len(components[0].means)
    rng = np.random.default_rng(seed)
    per_layer = [[] for _ in range(n_layers)]
    for comp in components:
        if len(comp.means) != n_layers or len(comp.covs) != n_layers:
            raise ShapeError("components disagree on the number of layers")
        for li in range(n_layers):
            mean = np.asarray(comp.means[li], dtype=np.float64)
            factor = _psd_factor(comp.covs[li])
            if factor.shape[0] != mean.shape[0]:
                raise ShapeError("mean/covariance dimensions disagree")
            z = rng.standard_normal((comp.count, mean.shape[0]))
            per_layer[li].append(mean + z @ factor.T)
    arrays = [np.concatenate(group, axis=0) for group in per_layer]
    return FeatureSet.from_arrays(arrays, names=layer_names)


# ---------------------------------------------------------------------------
# Deployment streams


@dataclass(frozen=True)
class StreamBatch:
    """Index picks for one deployment batch, shuffled by ``order``."""

    id_indices: np.ndarray
    ood_indices: np.ndarray
    order: np.ndarray  # permutation of range(K)


@dataclass(frozen=True)
class StreamPlan:
    """T disjoint deployment batches plus the held-out test split."""

    batches: tuple
    test_id_indices: np.ndarray
    test_ood_indices: np.ndarray
    K: int
    pi: float
    ood_per_batch: int

    @property
    def T(self) -> int:
        return len(self.batches)


def build_stream(
    id_pool: FeatureSet, ood_pool: FeatureSet, T: int, K: int, pi: float, seed: int
) -> StreamPlan:
    """Plan T batches of K samples with exactly round(pi*K) OOD in each.

    No pool index is used twice; all unused indices form the test split,
    so test samples are disjoint from every deployment batch.
    """
    if T < 1 or K < 1:
        raise InsufficientPoolError("T and K must both be at least 1")
    if not 0.0 <= pi <= 1.0:
        raise InsufficientPoolError(f"contamination must be in [0, 1], got {pi}")
    n_ood = int(round(pi * K))
    n_id = K - n_ood
    if T * n_id > id_pool.n:
        raise InsufficientPoolError(
            f"ID pool has {id_pool.n} samples, need {T * n_id}"
        )
    if T * n_ood > ood_pool.n:
        raise InsufficientPoolError(
            f"OOD pool has {ood_pool.n} samples, need {T * n_ood}"
        )
    rng = np.random.default_rng(seed)
    id_perm = rng.permutation(id_pool.n)
    ood_perm = rng.permutation(ood_pool.n)
    batches = []
    for t in range(T):
        batches.append(
            StreamBatch(
                id_indices=id_perm[t * n_id : (t + 1) * n_id],
                ood_indices=ood_perm[t * n_ood : (t + 1) * n_ood],
                order=rng.permutation(K),
            )
        )
    return StreamPlan(
        batches=tuple(batches),
        test_id_indices=id_perm[T * n_id :],
        test_ood_indices=ood_perm[T * n_ood :],
        K=K,
        pi=pi,
        ood_per_batch=n_ood,
    )


def materialize_batch(
    plan: StreamPlan, id_pool: FeatureSet, ood_pool: FeatureSet, t: int
):
    """Batch ``t`` as an unlabeled FeatureSet plus its ground-truth labels."""
    batch = plan.batches[t]
    parts = []
    if batch.id_indices.size:
        parts.append(id_pool.subset(batch.id_indices).features_only())
    if batch.ood_indices.size:
        parts.append(ood_pool.subset(batch.ood_indices).features_only())
    stacked = FeatureSet.concat(parts) if len(parts) > 1 else parts[0]
    truth = np.concatenate(
        [
            np.zeros(batch.id_indices.size, dtype=np.uint8),
            np.ones(batch.ood_indices.size, dtype=np.uint8),
        ]
    )
    return stacked.subset(batch.order), truth[batch.order]
