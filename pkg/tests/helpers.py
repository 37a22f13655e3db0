"""Independent oracles the tests check production code against.

Everything here deliberately avoids the library's vectorized code paths:
assignments scan hyperplanes one by one, rankings use Python's sort, and
chamfer distances come from a double loop.
"""

import numpy as np


def assign_oracle(Y, h, x) -> int:
    """Linear-scan argmax of <y_i, x> + h_i with lowest-index tie-break."""
    best_idx = 0
    best_val = None
    for i in range(len(Y)):
        val = float(np.dot(Y[i], x)) + float(h[i])
        if best_val is None or val > best_val:
            best_val = val
            best_idx = i
    return best_idx


def rank_oracle(Y, h, x, k):
    """Full sort of hyperplane values, descending, ties by lowest index."""
    values = [float(np.dot(Y[i], x)) + float(h[i]) for i in range(len(Y))]
    order = sorted(range(len(Y)), key=lambda i: (-values[i], i))
    return order[0], order[1:k + 1]


def chamfer_oracle(a, b, variant="mean-sq") -> float:
    """O(P^2) double-loop chamfer distance."""
    def one_way(src, dst):
        mins = []
        for p in src:
            best = None
            for q in dst:
                diff = p - q
                dist = float(diff[0] * diff[0] + diff[1] * diff[1]
                             + diff[2] * diff[2]) if len(diff) == 3 else \
                    float((diff * diff).sum())
                if best is None or dist < best:
                    best = dist
            mins.append(best)
        return mins

    ab = one_way(a, b)
    ba = one_way(b, a)
    if variant == "mean-sq":
        return sum(ab) / len(ab) + sum(ba) / len(ba)
    if variant == "sum-sq":
        return sum(ab) + sum(ba)
    return (sum(v ** 0.5 for v in ab) / len(ab)
            + sum(v ** 0.5 for v in ba) / len(ba))


def mode_angles(fs):
    """(max intra-mode angle, mean inter-mode angle) of a labeled set."""
    Y = fs.vectors
    labels = fs.labels
    intra = []
    inter = []
    for i in range(len(Y)):
        for j in range(i + 1, len(Y)):
            cos = float(Y[i] @ Y[j]) / (np.linalg.norm(Y[i]) * np.linalg.norm(Y[j]))
            ang = float(np.arccos(np.clip(cos, -1.0, 1.0)))
            (intra if labels[i] == labels[j] else inter).append(ang)
    return max(intra), float(np.mean(inter))
