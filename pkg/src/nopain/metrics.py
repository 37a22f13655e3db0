"""Perturbation-strength metrics between original and generated clouds."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyCloud, InvalidSpec
from .features import PointCloud

CD_VARIANTS = ("mean-sq", "sum-sq", "mean")

_BLOCK = 256  # rows per pairwise-distance block; keeps memory flat


@dataclass(frozen=True)
class CloudPair:
    original: PointCloud
    adversarial: PointCloud

    def __post_init__(self):
        if self.original.points.shape[1] != self.adversarial.points.shape[1]:
            raise DimensionMismatch("paired clouds differ in dimension")


def _points_of(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    arr = np.asarray(cloud, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch("expected a P x k point array")
    if arr.shape[0] == 0:
        raise EmptyCloud("point set is empty")
    return arr


def _min_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """For each row of a, the squared distance to its nearest row of b.

    Squared distances are formed from true differences (not the expanded
    |a|^2 + |b|^2 - 2ab form), so coincident points give exactly 0.
    """
    out = np.empty(a.shape[0])
    for start in range(0, a.shape[0], _BLOCK):
        block = a[start:start + _BLOCK]
        diff = block[:, None, :] - b[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        out[start:start + _BLOCK] = sq.min(axis=1)
    return out


def chamfer_distance(a, b, variant: str = "mean-sq") -> float:
    """Symmetric nearest-neighbor divergence between two point sets.

    Variants: "mean-sq" (default) averages squared nearest distances in
    both directions; "sum-sq" sums them; "mean" averages unsquared
    distances. Accepts PointCloud instances or raw arrays.
    """
    if variant not in CD_VARIANTS:
        raise InvalidSpec(f"variant must be one of {CD_VARIANTS}")
    pa = _points_of(a)
    pb = _points_of(b)
    if pa.shape[1] != pb.shape[1]:
        raise DimensionMismatch("clouds differ in dimension")
    ab = _min_sq_dists(pa, pb)
    ba = _min_sq_dists(pb, pa)
    if variant == "mean-sq":
        return float(ab.mean() + ba.mean())
    if variant == "sum-sq":
        return float(ab.sum() + ba.sum())
    return float(np.sqrt(ab).mean() + np.sqrt(ba).mean())


def batch_cd(pairs: list[CloudPair], variant: str = "mean-sq",
             ) -> tuple[float, list[float]]:
    """Chamfer distance per pair plus the arithmetic mean over pairs."""
    if not pairs:
        raise InvalidSpec("need at least one cloud pair")
    per_pair = [chamfer_distance(p.original, p.adversarial, variant=variant)
                for p in pairs]
    return float(np.mean(per_pair)), per_pair
