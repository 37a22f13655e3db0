"""Singular-boundary detection on the solved cell decomposition.

For each cell, a probe point x inside it orders every other hyperplane by
its value at x; the closest K of those are the cell's neighbors. A neighbor
is flagged singular when the angle between the two target vectors,

    angle = arccos( <y_i, y_k> / (|y_i| |y_k|) ),

exceeds the threshold tau. By default tau is compared against the arccos
angle in radians; `threshold_on="cosine"` instead compares the raw cosine
similarity against tau (flagging cos > tau), for callers who want the
un-arccos'd quantity.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidSpec, IoFailure, ProbeExhausted, ZeroVector
from .features import FLAG_LABELS, FORMAT_VERSION, NPFT_MAGIC, _HEADER
from .sdot import CellStatistics, _heights_of, _vectors_of, assign_cell
from . import rng

PAIR_SELECTION_MODES = ("max-angle", "first-exceeding")
THRESHOLD_MODES = ("angle", "cosine")


@dataclass(frozen=True)
class BoundaryConfig:
    """Neighborhood size, threshold and probing policy for detection."""

    k: int = 11
    tau: float = 1.6
    max_probe_attempts: int = 1000
    pair_selection: str = "max-angle"
    threshold_on: str = "angle"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise InvalidSpec("k must be a positive integer")
        if self.pair_selection not in PAIR_SELECTION_MODES:
            raise InvalidSpec(f"pair_selection must be one of {PAIR_SELECTION_MODES}")
        if self.threshold_on not in THRESHOLD_MODES:
            raise InvalidSpec(f"threshold_on must be one of {THRESHOLD_MODES}")
        if self.threshold_on == "angle":
            # tau = 0 flags every positive angle; tau >= pi flags nothing.
            # Both extremes are legal so sweeps don't need special casing.
            if not (self.tau >= 0):
                raise InvalidSpec("angle threshold must be nonnegative")
        else:
            if not (-1.0 <= self.tau <= 1.0):
                raise InvalidSpec("cosine threshold must lie in [-1, 1]")
        if self.max_probe_attempts < 1:
            raise InvalidSpec("max_probe_attempts must be positive")


@dataclass(frozen=True)
class NeighborRanking:
    """The K nearest hyperplanes (by value at the probe), anchor excluded."""

    anchor: int
    probe: np.ndarray
    neighbors: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class SingularPair:
    """A flagged (cell, neighbor) pair and the angle that flagged it."""

    i: int
    i_k: int
    angle: float
    cos_sim: float
    probe: np.ndarray


@dataclass
class DetectionSummary:
    """Per-run bookkeeping: skip counts and the observed angle spread."""

    anchors_total: int
    emitted: int = 0
    no_exceeding: int = 0
    probe_exhausted: int = 0
    zero_vector: int = 0
    max_angles: np.ndarray | None = None

    def angle_quantiles(self, qs=(0.0, 0.25, 0.5, 0.75, 1.0)) -> dict[float, float]:
        """Quantiles of the per-anchor maximum neighbor angle (probed anchors)."""
        if self.max_angles is None:
            return {}
        observed = self.max_angles[np.isfinite(self.max_angles)]
        if observed.size == 0:
            return {}
        return {q: float(np.quantile(observed, q)) for q in qs}


def probe_cell(fs, h, i: int, stats: CellStatistics,
               cfg: BoundaryConfig = BoundaryConfig()) -> np.ndarray:
    """Return a source point x with assign_cell(x) == i.

    Prefers the statistics' cached batch samples (provably in-cell, picked
    uniformly under the config seed); falls back to rejection sampling
    fresh Gaussian draws, giving up after max_probe_attempts.
    """
    Y = _vectors_of(fs)
    n, d = Y.shape
    if not (0 <= i < n):
        raise DimensionMismatch(f"cell index {i} out of range for N={n}")
    gen = rng.stream(cfg.seed, rng.DOMAIN_PROBE, i)
    members = stats.members_of(i)
    if members.shape[0] > 0:
        x = members[int(gen.integers(members.shape[0]))]
        if assign_cell(fs, h, x) == i:  # guards against stale stats
            return x
    for _ in range(cfg.max_probe_attempts):
        x = rng.normal_matrix(gen, 1, d)[0]
        if assign_cell(fs, h, x) == i:
            return x
    raise ProbeExhausted(
        f"no sample landed in cell {i} after {cfg.max_probe_attempts} attempts"
    )


def rank_neighbors(fs, h, x, k: int) -> NeighborRanking:
    """Rank all hyperplanes by value at x and keep the K after the anchor.

    Values are sorted descending with ties broken by lowest index; rank 0
    (the anchor, i.e. the cell containing x) is dropped and the next K
    indices are the neighbors.
    """
    Y = _vectors_of(fs)
    hv = _heights_of(h)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != Y.shape[1]:
        raise DimensionMismatch(f"x has dim {x.shape[0]}, targets have dim {Y.shape[1]}")
    n = Y.shape[0]
    if not (1 <= k < n):
        raise InvalidSpec(f"need 1 <= K < N, got K={k}, N={n}")
    values = Y @ x + hv
    order = np.argsort(-values, kind="stable")
    neighbors = order[1:k + 1]
    return NeighborRanking(anchor=int(order[0]), probe=x,
                           neighbors=neighbors.astype(np.int64),
                           values=values[neighbors].copy())


def pair_angle(y_i, y_k) -> tuple[float, float]:
    """Cosine similarity and arccos angle (radians) between two targets."""
    y_i = np.asarray(y_i, dtype=np.float64).reshape(-1)
    y_k = np.asarray(y_k, dtype=np.float64).reshape(-1)
    if y_i.shape != y_k.shape:
        raise DimensionMismatch("vectors differ in dimension")
    norm_i = float(np.linalg.norm(y_i))
    norm_k = float(np.linalg.norm(y_k))
    if norm_i == 0.0 or norm_k == 0.0:
        raise ZeroVector("cannot measure an angle against a zero vector")
    cos_sim = float(y_i @ y_k) / (norm_i * norm_k)
    angle = float(np.arccos(np.clip(cos_sim, -1.0, 1.0)))
    return cos_sim, angle


def _exceeds(cfg: BoundaryConfig, cos_sim: float, angle: float) -> bool:
    if cfg.threshold_on == "angle":
        return angle > cfg.tau
    return cos_sim > cfg.tau


def detect_singular_pairs(fs, h, stats: CellStatistics,
                          cfg: BoundaryConfig = BoundaryConfig(),
                          ) -> tuple[list[SingularPair], DetectionSummary]:
    """Flag at most one singular neighbor per cell.

    For every anchor cell: probe it, rank its K neighbors, measure the
    angles, and keep the exceeding neighbor chosen by cfg.pair_selection
    ("max-angle" takes the largest exceeding angle, "first-exceeding" the
    nearest-ranked one). Anchors that cannot be probed, have a zero-norm
    target, or have no exceeding neighbor are skipped and counted. The
    result is deterministic for a fixed seed and ordered by anchor index.
    """
    Y = _vectors_of(fs)
    n = Y.shape[0]
    pairs: list[SingularPair] = []
    summary = DetectionSummary(anchors_total=n, max_angles=np.full(n, np.nan))
    for anchor in range(n):
        try:
            x = probe_cell(fs, h, anchor, stats, cfg)
        except ProbeExhausted:
            summary.probe_exhausted += 1
            continue
        ranking = rank_neighbors(fs, h, x, cfg.k)
        try:
            measured = [(int(j),) + pair_angle(Y[anchor], Y[j])
                        for j in ranking.neighbors
                        if np.linalg.norm(Y[j]) > 0.0]
        except ZeroVector:
            summary.zero_vector += 1
            continue
        if not measured:
            summary.no_exceeding += 1
            continue
        summary.max_angles[anchor] = max(m[2] for m in measured)
        flagged = [m for m in measured if _exceeds(cfg, m[1], m[2])]
        if not flagged:
            summary.no_exceeding += 1
            continue
        if cfg.pair_selection == "max-angle":
            key = (lambda m: m[2]) if cfg.threshold_on == "angle" else (lambda m: m[1])
            chosen = max(flagged, key=key)
        else:
            chosen = flagged[0]
        pairs.append(SingularPair(i=anchor, i_k=chosen[0], cos_sim=chosen[1],
                                  angle=chosen[2], probe=x))
        summary.emitted += 1
    return pairs, summary


def export_pairs_csv(pairs: list[SingularPair], csv_path, probes_path) -> None:
    """Write pairs as `anchor,neighbor,cos_sim,angle_rad,probe_file_offset`.

    Probes go to a sidecar file in NPFT layout (one row per pair, in pair
    order); the offset column is the byte offset of each probe's row there.
    The sidecar is written raw so it stays well-formed even for fewer than
    two pairs.
    """
    d = pairs[0].probe.shape[0] if pairs else 0
    try:
        with open(probes_path, "wb") as fh:
            fh.write(_HEADER.pack(NPFT_MAGIC, FORMAT_VERSION, 0, len(pairs), d))
            for p in pairs:
                fh.write(np.ascontiguousarray(p.probe, dtype="<f8").tobytes())
        with open(csv_path, "w") as fh:
            fh.write("anchor,neighbor,cos_sim,angle_rad,probe_file_offset\n")
            for row, p in enumerate(pairs):
                offset = _HEADER.size + row * d * 8
                fh.write(f"{p.i},{p.i_k},{p.cos_sim:.12g},{p.angle:.12g},{offset}\n")
    except OSError as exc:
        raise IoFailure(f"cannot export pairs: {exc}") from exc
