"""Mode-mixed feature generation along detected singular boundaries.

Each flagged pair (i, i_k) contributes one generated vector: the probe x is
weighted toward the two cells' Monte-Carlo mass centers by inverse distance,

    lam_j = (1 / |x - c_j|) / (1 / |x - c_i| + 1 / |x - c_ik|),

and the output is the convex combination lam_i * y_i + lam_ik * y_ik. A
probe coinciding with a center is resolved to that side (lam = 1) and the
result is flagged degenerate instead of raising.
"""

import csv as _csv
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryConfig, SingularPair, detect_singular_pairs
from .errors import DimensionMismatch, IoFailure, NotConvergedInput
from .features import FeatureSet
from .sdot import CellStatistics, _heights_of, energy


@dataclass(frozen=True)
class AdversarialFeature:
    """One generated vector with full provenance."""

    vector: np.ndarray
    source_i: int
    source_ik: int
    lambda_i: float
    lambda_ik: float
    angle: float
    probe: np.ndarray
    degenerate: bool = False


@dataclass
class AttackSummary:
    """Outcome counts plus the angle spread seen during detection."""

    pairs_found: int = 0
    skipped_no_exceeding: int = 0
    skipped_probe_exhausted: int = 0
    skipped_missing_center: int = 0
    skipped_zero_vector: int = 0
    degenerate_count: int = 0
    angle_quantiles: dict[float, float] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"pairs found:            {self.pairs_found}",
            f"skipped (no angle > tau): {self.skipped_no_exceeding}",
            f"skipped (probe failed):  {self.skipped_probe_exhausted}",
            f"skipped (empty center):  {self.skipped_missing_center}",
            f"skipped (zero vector):   {self.skipped_zero_vector}",
            f"degenerate probes:       {self.degenerate_count}",
        ]
        if self.angle_quantiles:
            quants = "  ".join(f"q{int(q * 100):02d}={a:.4f}"
                               for q, a in sorted(self.angle_quantiles.items()))
            lines.append(f"max-angle quantiles (rad): {quants}")
        return "\n".join(lines)


def mass_centers(stats: CellStatistics) -> list[np.ndarray | None]:
    """Per-cell mass centers; None where a cell caught no samples.

    Recomputes from the cached batch if the stored centers are missing.
    """
    out: list[np.ndarray | None] = []
    for i in range(stats.count):
        if stats.member_counts[i] == 0:
            out.append(None)
            continue
        c = stats.centers[i]
        if not np.isfinite(c).all():
            members = stats.members_of(i)
            c = members.mean(axis=0)
        out.append(c)
    return out


def interpolate(pair: SingularPair, c_i, c_ik, y_i, y_ik) -> AdversarialFeature:
    """Blend the pair's two targets by inverse probe-to-center distance."""
    x = np.asarray(pair.probe, dtype=np.float64)
    c_i = np.asarray(c_i, dtype=np.float64)
    c_ik = np.asarray(c_ik, dtype=np.float64)
    y_i = np.asarray(y_i, dtype=np.float64)
    y_ik = np.asarray(y_ik, dtype=np.float64)
    if not (x.shape == c_i.shape == c_ik.shape):
        raise DimensionMismatch("probe and centers differ in dimension")
    if y_i.shape != y_ik.shape:
        raise DimensionMismatch("pair targets differ in dimension")
    dist_i = float(np.linalg.norm(x - c_i))
    dist_ik = float(np.linalg.norm(x - c_ik))
    if dist_i == 0.0 or dist_ik == 0.0:
        lam_i = 1.0 if dist_i == 0.0 else 0.0
        vector = y_i if dist_i == 0.0 else y_ik
        return AdversarialFeature(vector=vector.copy(), source_i=pair.i,
                                  source_ik=pair.i_k, lambda_i=lam_i,
                                  lambda_ik=1.0 - lam_i, angle=pair.angle,
                                  probe=x, degenerate=True)
    inv_i = 1.0 / dist_i
    inv_ik = 1.0 / dist_ik
    lam_i = inv_i / (inv_i + inv_ik)
    lam_ik = inv_ik / (inv_i + inv_ik)
    vector = lam_i * y_i + lam_ik * y_ik
    return AdversarialFeature(vector=vector, source_i=pair.i, source_ik=pair.i_k,
                              lambda_i=lam_i, lambda_ik=lam_ik,
                              angle=pair.angle, probe=x)


def run_attack(fs: FeatureSet, h, stats: CellStatistics,
               cfg: BoundaryConfig = BoundaryConfig(), eta: float = 2e-3,
               ) -> tuple[list[AdversarialFeature], AttackSummary]:
    """Detect singular pairs and interpolate one generated vector per pair.

    The statistics must come from a converged solve: their energy is checked
    against `eta` up front (pass eta=inf to bypass when timing or testing).
    Output is ordered by anchor index and deterministic for a fixed seed;
    at most one vector per cell is produced.
    """
    hv = _heights_of(h)
    if hv.shape[0] != fs.count:
        raise DimensionMismatch("heights length does not match feature count")
    e_now = energy(stats, fs.count)
    if not (e_now < eta):
        raise NotConvergedInput(
            f"statistics energy {e_now:.3e} is not below eta={eta:.3e}; "
            "solve to convergence before attacking"
        )
    pairs, det = detect_singular_pairs(fs, hv, stats, cfg)
    centers = mass_centers(stats)
    features: list[AdversarialFeature] = []
    summary = AttackSummary(
        skipped_no_exceeding=det.no_exceeding,
        skipped_probe_exhausted=det.probe_exhausted,
        skipped_zero_vector=det.zero_vector,
        angle_quantiles=det.angle_quantiles(),
    )
    for pair in pairs:
        c_i, c_ik = centers[pair.i], centers[pair.i_k]
        if c_i is None or c_ik is None:
            summary.skipped_missing_center += 1
            continue
        feat = interpolate(pair, c_i, c_ik, fs.vectors[pair.i], fs.vectors[pair.i_k])
        if feat.degenerate:
            summary.degenerate_count += 1
        features.append(feat)
    summary.pairs_found = len(features)
    return features, summary


def adversarial_feature_set(features: list[AdversarialFeature],
                            source_tag: str = "adversarial") -> FeatureSet:
    """Stack generated vectors into a FeatureSet (needs at least two)."""
    vectors = np.vstack([f.vector for f in features])
    return FeatureSet(vectors=vectors, source_tag=source_tag)


def write_manifest(features: list[AdversarialFeature], path) -> None:
    """CSV manifest `anchor,neighbor,lambda_i,lambda_ik,angle_rad`."""
    try:
        with open(path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["anchor", "neighbor", "lambda_i", "lambda_ik",
                             "angle_rad"])
            for f in features:
                writer.writerow([f.source_i, f.source_ik,
                                 f"{f.lambda_i:.12g}", f"{f.lambda_ik:.12g}",
                                 f"{f.angle:.12g}"])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
