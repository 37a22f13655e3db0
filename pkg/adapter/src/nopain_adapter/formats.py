"""NPFT v1 / NPPC v1 readers and writers.

The adapter speaks these wire formats directly so it has no code dependency
on the pipeline that consumes its output; both sides must agree byte for
byte. Layout (little-endian): 4-byte magic, u32 version=1, u8 flags,
two u64 size fields, then the f64 payload. NPFT sizes are (N, d) with an
optional N x i64 label block when flag bit 0 is set; NPPC sizes are
(N_clouds, P_points) with a 3-wide coordinate payload and no flags.

Unlike the attack pipeline, which requires at least two feature rows, the
adapter accepts N >= 1: encoding a single cloud is legitimate here.
"""

import struct

import numpy as np

from .errors import IoFailure, MalformedFile, NonFiniteData

NPFT_MAGIC = b"NPFT"
NPPC_MAGIC = b"NPPC"
VERSION = 1
FLAG_LABELS = 0x01

HEADER = struct.Struct("<4sIBQQ")


def _read(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _check_header(raw: bytes, magic: bytes, path):
    if len(raw) < HEADER.size:
        raise MalformedFile(f"{path}: truncated header")
    got, version, flags, a, b = HEADER.unpack_from(raw, 0)
    if got != magic:
        raise MalformedFile(f"{path}: bad magic {got!r}")
    if version != VERSION:
        raise MalformedFile(f"{path}: unsupported version {version}")
    return flags, a, b


def read_features(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Return (vectors, labels-or-None) from an NPFT file."""
    raw = _read(path)
    flags, n, d = _check_header(raw, NPFT_MAGIC, path)
    if flags & ~FLAG_LABELS:
        raise MalformedFile(f"{path}: unknown flag bits 0x{flags:02x}")
    expect = HEADER.size + n * d * 8 + (n * 8 if flags & FLAG_LABELS else 0)
    if len(raw) != expect:
        raise MalformedFile(f"{path}: length {len(raw)} != expected {expect}")
    if n < 1 or d < 1:
        raise MalformedFile(f"{path}: empty feature file")
    vectors = np.frombuffer(raw, dtype="<f8", count=n * d,
                            offset=HEADER.size).reshape(n, d).astype(float)
    if not np.isfinite(vectors).all():
        raise NonFiniteData(f"{path}: non-finite feature values")
    labels = None
    if flags & FLAG_LABELS:
        labels = np.frombuffer(raw, dtype="<i8", count=n,
                               offset=HEADER.size + n * d * 8).astype(np.int64)
    return vectors, labels


def write_features(vectors: np.ndarray, path, labels=None) -> None:
    vectors = np.asarray(vectors, dtype=np.float64)
    n, d = vectors.shape
    flags = FLAG_LABELS if labels is not None else 0
    try:
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(NPFT_MAGIC, VERSION, flags, n, d))
            fh.write(vectors.astype("<f8").tobytes())
            if labels is not None:
                fh.write(np.asarray(labels, dtype="<i8").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_clouds(path) -> np.ndarray:
    """Return an (N, P, 3) coordinate array from an NPPC file."""
    raw = _read(path)
    flags, n, p = _check_header(raw, NPPC_MAGIC, path)
    if flags:
        raise MalformedFile(f"{path}: NPPC defines no flag bits")
    expect = HEADER.size + n * p * 3 * 8
    if len(raw) != expect:
        raise MalformedFile(f"{path}: length {len(raw)} != expected {expect}")
    if n < 1 or p < 1:
        raise MalformedFile(f"{path}: empty cloud file")
    clouds = np.frombuffer(raw, dtype="<f8", count=n * p * 3,
                           offset=HEADER.size).reshape(n, p, 3).astype(float)
    if not np.isfinite(clouds).all():
        raise NonFiniteData(f"{path}: non-finite coordinates")
    return clouds


def write_clouds(clouds: np.ndarray, path) -> None:
    clouds = np.asarray(clouds, dtype=np.float64)
    n, p, three = clouds.shape
    if three != 3:
        raise MalformedFile("clouds must be N x P x 3")
    try:
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(NPPC_MAGIC, VERSION, 0, n, p))
            fh.write(clouds.astype("<f8").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
