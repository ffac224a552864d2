"""Codebook learning and token encoding/decoding.

Supports the three blending strategies for parallel token streams:
multiple layers of one model, layers from different models, and
residual multi-stage quantization. Training is deterministic for a
fixed (data, k, seed, max_iters, tol): k-means++ seeding from a PCG64
generator, Lloyd iterations until the largest centroid movement drops
below tol, empty clusters repaired by stealing the point farthest from
its centroid. Nearest-centroid ties always break toward the lowest
index.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, CorruptionError, FormatError, InsufficientDataError

DEFAULT_MAX_ITERS = 300
DEFAULT_TOL = 1e-4

# Single-singer / multi-singer cluster-count defaults.
DEFAULT_K_SINGLE = 128
DEFAULT_K_MULTI = 1024

_CODEBOOK_MAGIC = b"TKCB"
_CODEBOOK_VERSION = 1

_ASSIGN_CHUNK = 256  # frames per exact-distance block


@dataclass(frozen=True)
class FeatureSource:
    model_name: str = ""
    layer: int = 0


@dataclass(frozen=True)
class FeatureMatrix:
    data: np.ndarray  # N x D, float64
    fps: int
    source: FeatureSource = field(default_factory=FeatureSource)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"feature data must be 2-D, got shape {data.shape}")
        if data.shape[1] < 1:
            raise ValueError("feature dimension must be >= 1")
        if data.size and not np.all(np.isfinite(data)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "data", data)

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # K x D
    seed: int = 0
    inertia: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        centroids = np.asarray(self.centroids, dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape[0] < 1:
            raise ValueError("centroids must be a non-empty K x D array")
        if not np.all(np.isfinite(centroids)):
            raise ValueError("centroids must be finite")
        object.__setattr__(self, "centroids", centroids)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class RvqCodebook:
    stages: tuple[Codebook, ...]

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise ValueError("RVQ needs at least one stage")
        if len({cb.dim for cb in stages}) != 1:
            raise ValueError("all RVQ stages must share the same dimension")
        object.__setattr__(self, "stages", stages)

    @property
    def dim(self) -> int:
        return self.stages[0].dim

    @property
    def num_stages(self) -> int:
        return len(self.stages)


def _exact_assign(centroids: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Nearest-centroid ids with exact squared distances, lowest-index ties."""
    labels = np.empty(rows.shape[0], dtype=np.int64)
    for start in range(0, rows.shape[0], _ASSIGN_CHUNK):
        block = rows[start : start + _ASSIGN_CHUNK]
        d2 = ((block[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels[start : start + block.shape[0]] = np.argmin(d2, axis=1)
    return labels


def _sq_dist_to_assigned(centroids, rows, labels) -> np.ndarray:
    diff = rows - centroids[labels]
    return (diff * diff).sum(axis=1)


def _kmeanspp_init(rows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = rows.shape[0]
    centroids = np.empty((k, rows.shape[1]))
    centroids[0] = rows[rng.integers(n)]
    d2 = ((rows - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a chosen centroid
            centroids[j] = rows[rng.integers(n)]
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
            centroids[j] = rows[idx]
        d2 = np.minimum(d2, ((rows - centroids[j]) ** 2).sum(axis=1))
    return centroids


def train_kmeans(
    features: FeatureMatrix,
    k: int,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding; deterministic per seed."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rows = features.data
    if rows.shape[0] < k:
        raise InsufficientDataError(
            f"need at least {k} frames to train k={k}, got {rows.shape[0]}"
        )
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(rows, k, rng)

    labels = _exact_assign(centroids, rows)
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        new_centroids = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                new_centroids[j] = rows[labels == j].mean(axis=0)

        empty = np.nonzero(counts == 0)[0]
        if empty.size:
            d2 = _sq_dist_to_assigned(new_centroids, rows, labels)
            for j in empty:
                far = int(np.argmax(d2))
                new_centroids[j] = rows[far]
                labels[far] = j
                d2[far] = 0.0

        movement = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        labels = _exact_assign(centroids, rows)
        if movement < tol:
            break

    inertia = float(_sq_dist_to_assigned(centroids, rows, labels).sum())
    return Codebook(centroids=centroids, seed=seed, inertia=inertia, iterations=iterations)


def assign(codebook: Codebook, vector) -> int:
    """Index of the nearest centroid; ties break toward the lowest index."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (codebook.dim,):
        raise ValueError(f"expected a vector of dim {codebook.dim}, got shape {v.shape}")
    d2 = ((codebook.centroids - v) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def encode(codebook: Codebook, features: FeatureMatrix) -> np.ndarray:
    """Per-frame nearest-centroid token ids."""
    if features.dim != codebook.dim:
        raise ValueError(
            f"feature dim {features.dim} does not match codebook dim {codebook.dim}"
        )
    return _exact_assign(codebook.centroids, features.data)


def decode(codebook: Codebook, tokens, fps: int, source: FeatureSource | None = None) -> FeatureMatrix:
    """Centroid lookup; row i is the centroid of tokens[i]."""
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= codebook.k):
        raise ValueError(f"token ids must lie in [0, {codebook.k})")
    data = codebook.centroids[ids] if ids.size else np.zeros((0, codebook.dim))
    return FeatureMatrix(data=data, fps=fps, source=source or FeatureSource())


def train_rvq(
    features: FeatureMatrix,
    stages: int,
    k_per_stage,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> RvqCodebook:
    """Residual quantizer: stage s is trained on stage s-1's residuals.

    k_per_stage is a single cluster count shared by every stage or a
    sequence of per-stage counts (length == stages). Stage s uses seed+s.
    """
    if stages < 1:
        raise ValueError(f"stages must be >= 1, got {stages}")
    if np.isscalar(k_per_stage):
        ks = [int(k_per_stage)] * stages
    else:
        ks = [int(k) for k in k_per_stage]
        if len(ks) != stages:
            raise ValueError(f"expected {stages} per-stage k values, got {len(ks)}")
    residual = features.data
    books = []
    for s in range(stages):
        stage_features = FeatureMatrix(residual, fps=features.fps, source=features.source)
        cb = train_kmeans(stage_features, ks[s], max_iters, tol, seed=seed + s)
        codes = _exact_assign(cb.centroids, residual)
        residual = residual - cb.centroids[codes]
        books.append(cb)
    return RvqCodebook(stages=tuple(books))


def encode_rvq(rvq: RvqCodebook, features: FeatureMatrix) -> list[np.ndarray]:
    """Greedy stage-by-stage encoding of features into S token sequences."""
    if features.dim != rvq.dim:
        raise ValueError(
            f"feature dim {features.dim} does not match RVQ dim {rvq.dim}"
        )
    residual = features.data
    streams = []
    for cb in rvq.stages:
        codes = _exact_assign(cb.centroids, residual)
        residual = residual - cb.centroids[codes]
        streams.append(codes)
    return streams


def decode_rvq(rvq: RvqCodebook, streams, fps: int) -> FeatureMatrix:
    """Sum of per-stage centroids."""
    if len(streams) != rvq.num_stages:
        raise ValueError(
            f"expected {rvq.num_stages} token streams, got {len(streams)}"
        )
    lengths = {len(s) for s in streams}
    if len(lengths) > 1:
        raise ValueError("all RVQ streams must have the same length")
    n = lengths.pop() if lengths else 0
    data = np.zeros((n, rvq.dim))
    for cb, tokens in zip(rvq.stages, streams):
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= cb.k):
            raise ValueError(f"token ids must lie in [0, {cb.k})")
        if ids.size:
            data += cb.centroids[ids]
    return FeatureMatrix(data=data, fps=fps)


def blend_encode(sources: list[tuple[FeatureMatrix, Codebook]]) -> list[np.ndarray]:
    """Parallel per-source encoding; all sources must share N and fps."""
    if not sources:
        raise ValueError("blend_encode needs at least one source")
    ns = {fm.num_frames for fm, _ in sources}
    fpss = {fm.fps for fm, _ in sources}
    if len(ns) > 1 or len(fpss) > 1:
        raise AlignmentError(
            f"sources disagree on frame count ({sorted(ns)}) or fps ({sorted(fpss)})"
        )
    return [encode(cb, fm) for fm, cb in sources]


def distortion(features: FeatureMatrix, reconstruction: FeatureMatrix) -> float:
    """Mean per-frame Euclidean error between two equal-shape matrices."""
    if features.data.shape != reconstruction.data.shape:
        raise ValueError(
            f"shape mismatch: {features.data.shape} vs {reconstruction.data.shape}"
        )
    if features.num_frames == 0:
        return 0.0
    diff = features.data - reconstruction.data
    return float(np.sqrt((diff * diff).sum(axis=1)).mean())


# --- codebook container ("TKCB") ---------------------------------------------
#
# Single codebook: magic "TKCB", version u16, D u32, K u32, seed u64,
# then K*D f32 little-endian centroids. An RVQ file is a u8 stage count
# followed by that many concatenated records.


def _codebook_bytes(cb: Codebook) -> bytes:
    header = _CODEBOOK_MAGIC + struct.pack(
        "<HIIQ", _CODEBOOK_VERSION, cb.dim, cb.k, cb.seed % (1 << 64)
    )
    return header + cb.centroids.astype("<f4").tobytes()


def _parse_codebook(data: bytes, offset: int) -> tuple[Codebook, int]:
    head = 4 + struct.calcsize("<HIIQ")
    if len(data) - offset < head:
        raise CorruptionError("truncated codebook header")
    if data[offset : offset + 4] != _CODEBOOK_MAGIC:
        raise FormatError("bad codebook magic")
    version, dim, k, seed = struct.unpack_from("<HIIQ", data, offset + 4)
    if version != _CODEBOOK_VERSION:
        raise FormatError(f"unsupported codebook version {version}")
    body = k * dim * 4
    if len(data) - offset - head < body:
        raise CorruptionError("truncated codebook centroids")
    centroids = np.frombuffer(data, dtype="<f4", count=k * dim, offset=offset + head)
    cb = Codebook(centroids=centroids.reshape(k, dim).astype(np.float64), seed=seed)
    return cb, offset + head + body


def write_codebook(cb: Codebook, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_codebook_bytes(cb))


def write_rvq(rvq: RvqCodebook, path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<B", rvq.num_stages))
        for cb in rvq.stages:
            fh.write(_codebook_bytes(cb))


def read_codebook_file(path) -> Codebook | RvqCodebook:
    """Load either a single codebook or an RVQ container (auto-detected)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == _CODEBOOK_MAGIC:
        cb, end = _parse_codebook(data, 0)
        if end != len(data):
            raise CorruptionError("trailing bytes after codebook")
        return cb
    if not data:
        raise FormatError("empty codebook file")
    count = data[0]
    if count < 1:
        raise FormatError("RVQ stage count must be >= 1")
    offset = 1
    stages = []
    for _ in range(count):
        cb, offset = _parse_codebook(data, offset)
        stages.append(cb)
    if offset != len(data):
        raise CorruptionError("trailing bytes after RVQ stages")
    return RvqCodebook(stages=tuple(stages))
