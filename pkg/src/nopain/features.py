"""Feature-set and point-cloud data model, on-disk formats, synthetic data.

Binary formats (all little-endian):

NPFT v1 (feature sets)
    bytes 0-3    magic ``4E 50 46 54`` ("NPFT")
    bytes 4-7    version, u32, must be 1
    byte  8      flags, u8; bit 0 = labels present, other bits must be 0
    bytes 9-16   N, u64
    bytes 17-24  d, u64
    then N*d f64 row-major vectors, then (if flagged) N i64 labels.

NPPC v1 (point clouds)
    same header shape with magic ``4E 50 50 43`` ("NPPC"); the two u64
    fields are N_clouds and P_points, followed by N*P*3 f64 coordinates.

Loading rejects any file whose length disagrees with the declared payload.
`load_features` additionally accepts a plain CSV (one vector per row) when
the path ends in ``.csv``; saving always writes NPFT.
"""

import csv
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidSpec,
    IoFailure,
    MalformedFile,
    NonFiniteData,
)
from . import rng

NPFT_MAGIC = b"NPFT"
NPPC_MAGIC = b"NPPC"
FORMAT_VERSION = 1
FLAG_LABELS = 0x01

_HEADER = struct.Struct("<4sIBQQ")  # magic, version, flags, two u64 fields


def _as_f64_matrix(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{what} must be a 2-D array, got ndim={arr.ndim}")
    if not np.isfinite(arr).all():
        raise NonFiniteData(f"{what} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class FeatureSet:
    """Discrete target measure: N feature vectors with uniform weight 1/N.

    Immutable after construction; the vectors array is marked read-only so
    instances are safe to share across threads.
    """

    vectors: np.ndarray
    labels: np.ndarray | None = None
    source_tag: str = ""

    def __post_init__(self):
        arr = _as_f64_matrix(self.vectors, "feature vectors")
        if arr.shape[0] < 2:
            raise InvalidSpec("a feature set needs at least 2 vectors")
        if arr.shape[1] < 1:
            raise DimensionMismatch("feature dimension must be >= 1")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "vectors", arr)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (arr.shape[0],):
                raise DimensionMismatch(
                    f"labels length {lab.shape} does not match N={arr.shape[0]}"
                )
            lab.flags.writeable = False
            object.__setattr__(self, "labels", lab)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureSet):
            return NotImplemented
        if not np.array_equal(self.vectors, other.vectors):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class PointCloud:
    """A single P x 3 point set."""

    points: np.ndarray
    name: str = ""

    def __post_init__(self):
        arr = _as_f64_matrix(self.points, "points")
        if arr.shape[0] < 1:
            raise InvalidSpec("a point cloud needs at least one point")
        if arr.shape[1] != 3:
            raise DimensionMismatch(f"points must be P x 3, got P x {arr.shape[1]}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "points", arr)


@dataclass(frozen=True)
class MixtureMode:
    mean: np.ndarray
    stddev: float
    weight: float


@dataclass(frozen=True)
class MixtureSpec:
    """Gaussian mixture used to generate desk-scale verification data."""

    modes: tuple[MixtureMode, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.modes:
            raise InvalidSpec("mixture needs at least one mode")
        total = 0.0
        for m in self.modes:
            if not (m.stddev > 0):
                raise InvalidSpec(f"mode stddev must be positive, got {m.stddev}")
            if not (m.weight > 0):
                raise InvalidSpec(f"mode weight must be positive, got {m.weight}")
            total += m.weight
        if abs(total - 1.0) > 1e-12:
            raise InvalidSpec(f"mode weights must sum to 1, got {total!r}")
        object.__setattr__(self, "modes", tuple(self.modes))


@dataclass
class _Header:
    flags: int
    n: int
    d: int


def _read_header(raw: bytes, magic: bytes, path) -> _Header:
    if len(raw) < _HEADER.size:
        raise MalformedFile(f"{path}: truncated header ({len(raw)} bytes)")
    got_magic, version, flags, n, d = _HEADER.unpack_from(raw, 0)
    if got_magic != magic:
        raise MalformedFile(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise MalformedFile(f"{path}: unsupported version {version}")
    if flags & ~FLAG_LABELS:
        raise MalformedFile(f"{path}: unknown flag bits 0x{flags:02x}")
    return _Header(flags=flags, n=n, d=d)


def load_features(path) -> FeatureSet:
    """Read a feature set from an NPFT v1 file (or a CSV import path).

    The NPFT path round-trips byte-exactly with `save_features`.
    """
    if str(path).endswith(".csv"):
        return _load_features_csv(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    hdr = _read_header(raw, NPFT_MAGIC, path)
    expect = _HEADER.size + hdr.n * hdr.d * 8
    if hdr.flags & FLAG_LABELS:
        expect += hdr.n * 8
    if len(raw) != expect:
        raise MalformedFile(
            f"{path}: file length {len(raw)} does not match declared "
            f"N={hdr.n}, d={hdr.d} (expected {expect})"
        )
    if hdr.n < 2:
        raise MalformedFile(f"{path}: N={hdr.n}, at least 2 feature vectors required")
    if hdr.d < 1:
        raise MalformedFile(f"{path}: d must be >= 1")
    off = _HEADER.size
    vectors = np.frombuffer(raw, dtype="<f8", count=hdr.n * hdr.d, offset=off)
    vectors = vectors.reshape(hdr.n, hdr.d).astype(np.float64)
    labels = None
    if hdr.flags & FLAG_LABELS:
        off += hdr.n * hdr.d * 8
        labels = np.frombuffer(raw, dtype="<i8", count=hdr.n, offset=off)
        labels = labels.astype(np.int64)
    if not np.isfinite(vectors).all():
        raise NonFiniteData(f"{path}: payload contains NaN or Inf")
    return FeatureSet(vectors=vectors, labels=labels, source_tag=os.fspath(path))


def _load_features_csv(path) -> FeatureSet:
    rows = []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                try:
                    rows.append([float(cell) for cell in row])
                except ValueError as exc:
                    raise MalformedFile(f"{path}:{lineno}: non-numeric cell") from exc
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise MalformedFile(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DimensionMismatch(f"{path}: rows have inconsistent column counts")
    vectors = np.array(rows, dtype=np.float64)
    if not np.isfinite(vectors).all():
        raise NonFiniteData(f"{path}: CSV contains non-finite values")
    return FeatureSet(vectors=vectors, source_tag=os.fspath(path))


def save_features(fs: FeatureSet, path) -> None:
    """Write `fs` as NPFT v1; the result loads back equal to `fs`."""
    flags = FLAG_LABELS if fs.labels is not None else 0
    header = _HEADER.pack(NPFT_MAGIC, FORMAT_VERSION, flags, fs.count, fs.dim)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(fs.vectors, dtype="<f8").tobytes())
            if fs.labels is not None:
                fh.write(np.ascontiguousarray(fs.labels, dtype="<i8").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_clouds(path) -> list[PointCloud]:
    """Read a list of equally sized point clouds from an NPPC v1 file."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    hdr = _read_header(raw, NPPC_MAGIC, path)
    if hdr.flags:
        raise MalformedFile(f"{path}: NPPC does not define flag bits")
    n_clouds, p_points = hdr.n, hdr.d
    expect = _HEADER.size + n_clouds * p_points * 3 * 8
    if len(raw) != expect:
        raise MalformedFile(
            f"{path}: file length {len(raw)} does not match declared "
            f"N={n_clouds}, P={p_points} (expected {expect})"
        )
    if n_clouds < 1 or p_points < 1:
        raise MalformedFile(f"{path}: empty cloud file")
    data = np.frombuffer(raw, dtype="<f8", count=n_clouds * p_points * 3,
                         offset=_HEADER.size)
    data = data.reshape(n_clouds, p_points, 3).astype(np.float64)
    if not np.isfinite(data).all():
        raise NonFiniteData(f"{path}: payload contains NaN or Inf")
    return [PointCloud(points=data[i], name=f"cloud_{i:05d}")
            for i in range(n_clouds)]


def save_clouds(clouds: list[PointCloud], path) -> None:
    """Write clouds as NPPC v1. All clouds must share one point count."""
    if not clouds:
        raise InvalidSpec("need at least one cloud")
    p_points = clouds[0].points.shape[0]
    if any(c.points.shape[0] != p_points for c in clouds):
        raise DimensionMismatch("NPPC requires all clouds to have equal P")
    header = _HEADER.pack(NPPC_MAGIC, FORMAT_VERSION, 0, len(clouds), p_points)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            for c in clouds:
                fh.write(np.ascontiguousarray(c.points, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _mode_counts(weights: np.ndarray, n: int) -> np.ndarray:
    # Largest-remainder apportionment, then make sure no mode starves
    # (callers guarantee n >= number of modes).
    raw = weights * n
    counts = np.floor(raw).astype(np.int64)
    remainder = n - counts.sum()
    if remainder > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:remainder]] += 1
    while (counts == 0).any():
        counts[np.argmax(counts == 0)] += 1
        counts[np.argmax(counts)] -= 1
    return counts


def synth_mixture(spec: MixtureSpec, n: int, d: int) -> FeatureSet:
    """Draw n feature vectors in R^d from the Gaussian mixture `spec`.

    Sample counts per mode follow the weights (largest-remainder rounding);
    rows are grouped by mode and labels record the mode index. Pure function
    of (spec, n, d): a fixed seed reproduces identical bytes.
    """
    k = len(spec.modes)
    if n < k:
        raise InvalidSpec(f"n={n} is smaller than the number of modes ({k})")
    if d < 1:
        raise InvalidSpec("dimension must be >= 1")
    means = []
    for m in spec.modes:
        mean = np.asarray(m.mean, dtype=np.float64).reshape(-1)
        if mean.shape[0] != d:
            raise DimensionMismatch(
                f"mode mean has dim {mean.shape[0]}, expected {d}"
            )
        means.append(mean)
    weights = np.array([m.weight for m in spec.modes], dtype=np.float64)
    counts = _mode_counts(weights, n)
    blocks = []
    labels = []
    for idx, (mode, mean, cnt) in enumerate(zip(spec.modes, means, counts)):
        gen = rng.stream(spec.seed, rng.DOMAIN_SYNTH, idx)
        z = rng.normal_matrix(gen, int(cnt), d)
        blocks.append(mean + mode.stddev * z)
        labels.extend([idx] * int(cnt))
    vectors = np.vstack(blocks)
    return FeatureSet(vectors=vectors, labels=np.array(labels, dtype=np.int64),
                      source_tag="synthetic-mixture")


def axis_mixture_spec(modes: int, d: int, scale: float = 10.0,
                      stddev: float = 0.5, seed: int = 0) -> MixtureSpec:
    """Equal-weight mixture with mode means on scaled coordinate axes.

    Mode m's mean is scale * e_m, so any two mode directions are orthogonal;
    requires modes <= d.
    """
    if modes < 1:
        raise InvalidSpec("need at least one mode")
    if modes > d:
        raise InvalidSpec(f"axis mixture supports at most d={d} modes")
    if not (scale > 0):
        raise InvalidSpec("scale must be positive")
    mode_list = []
    for m in range(modes):
        mean = np.zeros(d)
        mean[m] = scale
        mode_list.append(MixtureMode(mean=mean, stddev=stddev, weight=1.0 / modes))
    return MixtureSpec(modes=tuple(mode_list), seed=seed)
