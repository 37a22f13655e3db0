"""Stochastic semi-discrete optimal-transport solver.

The convex potential over source space is the upper envelope of one affine
hyperplane per target vector,

    value_i(x) = <y_i, x> + h_i,

and the induced cell of index i is the region where hyperplane i attains the
maximum. The solver adjusts the height vector h until Monte-Carlo estimates
of the cell masses under a standard Gaussian source are uniform: it descends
the energy

    E(h) = sum_i (w_i(h) - 1/N)^2

with Adam, where w_i(h) is the hit frequency of cell i in a batch of noise
samples. When the energy has not set a new running minimum for `patience`
consecutive epochs the batch size doubles and the learning rate decays.
Convergence is declared only after a fresh evaluation batch confirms it.
Testing E < eta on the training batch alone (or on a same-sized fresh
batch) is not a usable certificate at desk scale: with M = 10 N the
sampling noise floor of E is about 1/M, the same order as eta, so the loop
can exit mid-descent while a few cells still carry several times their
share of mass. The evaluation batch therefore has at least
EVAL_FLOOR_SAMPLES draws and must pass two checks: E < eta, and the
per-cell deviation bound

    max_i |w_i - 1/N| <= 5 sqrt((1/N)(1 - 1/N) / M_eval) + 0.5 sqrt(eta/N)

(binomial noise plus an even-spread residual allowance). The second check
is what makes "converged" mean "cell masses are actually uniform".

Heights persist as NPHT v1: magic ``4E 50 48 54`` ("NPHT"), u32 version,
u64 N, N f64 heights, then a footer of u64 seed and f64 final energy.
"""

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidSpec,
    IoFailure,
    MalformedFile,
    NonFiniteData,
    NotConverged,
)
from .features import FeatureSet
from . import rng

NPHT_MAGIC = b"NPHT"
NPHT_VERSION = 1
_NPHT_HEADER = struct.Struct("<4sIQ")
_NPHT_FOOTER = struct.Struct("<Qd")

# Minimum size of the convergence-certification batch (see module docstring).
# Sized so certification noise (6 sigma ~ 1.3e-3 per cell at N=100) sits
# below the residual allowance rather than dominating it.
EVAL_FLOOR_SAMPLES = 200_000

# Epochs to wait after a failed certification before re-certifying. The
# certification batch is the expensive step; without a cooldown the loop
# would spend most of its time evaluating instead of descending.
CERT_COOLDOWN_EPOCHS = 10


def measure_deviation_bound(n: int, m_eval: int, eta: float) -> float:
    """Largest per-cell |w_i - 1/N| a converged state may show at m_eval.

    Binomial noise (5 sigma) plus an even-spread residual allowance; this
    is the bound the measure-preservation property promises to observers.
    """
    binomial = 5.0 * np.sqrt((1.0 / n) * (1.0 - 1.0 / n) / m_eval)
    residual = 0.5 * np.sqrt(eta / n)
    return float(binomial + residual)


def certification_bound(n: int, m_eval: int, eta: float) -> float:
    """Per-cell deviation the solver demands before declaring convergence.

    Tighter than `measure_deviation_bound` by design: the certified state
    must survive an independent re-estimate (with its own binomial noise)
    and still sit inside the promised bound, so the residual allowance is
    cut to sqrt(eta/N)/3 and only trumped by the certification batch's own
    noise floor (6 sigma) when that dominates.
    """
    binomial = 6.0 * np.sqrt((1.0 / n) * (1.0 - 1.0 / n) / m_eval)
    residual = np.sqrt(eta / n) / 3.0
    return float(max(binomial, residual))


def _vectors_of(fs) -> np.ndarray:
    """Accept a FeatureSet or a raw N x d array (N=1 is allowed here)."""
    if isinstance(fs, FeatureSet):
        return fs.vectors
    arr = np.asarray(fs, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch("expected an N x d array of target vectors")
    return arr


def _heights_of(h) -> np.ndarray:
    if isinstance(h, HeightVector):
        return h.heights
    arr = np.asarray(h, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch("heights must be a 1-D vector")
    return arr


@dataclass(frozen=True)
class HeightVector:
    """Heights h parameterizing the hyperplane envelope, one per target.

    The potential is unchanged by adding a constant to every entry; the
    solver pins that freedom by mean-centering after every update.
    """

    heights: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.heights, dtype=np.float64).reshape(-1)
        if not np.isfinite(arr).all():
            raise NonFiniteData("heights contain NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "heights", arr)

    def __len__(self) -> int:
        return self.heights.shape[0]

    @property
    def mean_offset(self) -> float:
        return float(self.heights.sum())


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the height solver.

    batch_size=None resolves to 10 N at solve time. The Adam moment
    constants are ordinary defaults; the update rule itself is the standard
    bias-corrected form.
    """

    batch_size: int | None = None
    learning_rate: float = 1e-2
    eta: float = 2e-3
    patience: int = 50
    batch_growth: float = 2.0
    lr_decay: float = 0.8
    max_epochs: int = 20000
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidSpec("batch_size must be positive")
        if not (self.learning_rate > 0):
            raise InvalidSpec("learning_rate must be positive")
        if not (self.eta > 0):
            raise InvalidSpec("eta must be positive")
        if self.patience < 1:
            raise InvalidSpec("patience must be a positive integer")
        if not (self.batch_growth > 1):
            raise InvalidSpec("batch_growth must exceed 1")
        if not (0 < self.lr_decay < 1):
            raise InvalidSpec("lr_decay must lie in (0, 1)")
        if self.max_epochs < 1:
            raise InvalidSpec("max_epochs must be positive")


@dataclass(frozen=True)
class CellStatistics:
    """Monte-Carlo cell estimates: hit frequencies, counts, mass centers.

    centers[i] is the arithmetic mean of the batch samples assigned to cell
    i and is NaN-filled when the cell caught no samples. `samples` and
    `assignments` retain the batch itself so later stages can reuse
    provably in-cell points.
    """

    frequencies: np.ndarray
    member_counts: np.ndarray
    centers: np.ndarray
    samples: np.ndarray | None = None
    assignments: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=np.float64)
        if (w < 0).any():
            raise InvalidSpec("frequencies must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidSpec(f"frequencies must sum to 1, got {w.sum()!r}")

    @property
    def count(self) -> int:
        return self.frequencies.shape[0]

    def center_of(self, i: int) -> np.ndarray | None:
        """Mass center of cell i, or None when the cell is empty."""
        if self.member_counts[i] == 0:
            return None
        return self.centers[i]

    def members_of(self, i: int) -> np.ndarray:
        """Cached batch samples assigned to cell i (possibly empty)."""
        if self.samples is None:
            return np.empty((0, self.centers.shape[1]))
        return self.samples[self.assignments == i]


@dataclass
class SolveReport:
    """Observability record of one solve run."""

    final_energy: float
    epochs_run: int
    converged: bool
    energy_trajectory: list[tuple[int, float]] = field(default_factory=list)
    batch_size_trajectory: list[tuple[int, int]] = field(default_factory=list)
    lr_trajectory: list[tuple[int, float]] = field(default_factory=list)

    def write_log(self, path) -> None:
        """Line-oriented `epoch,energy,batch_size,lr` log for plotting."""
        batch = dict(self.batch_size_trajectory)
        lrs = dict(self.lr_trajectory)
        cur_m, cur_lr = None, None
        try:
            with open(path, "w") as fh:
                fh.write("epoch,energy,batch_size,lr\n")
                for epoch, energy_val in self.energy_trajectory:
                    cur_m = batch.get(epoch, cur_m)
                    cur_lr = lrs.get(epoch, cur_lr)
                    fh.write(f"{epoch},{energy_val:.10e},{cur_m},{cur_lr:.10e}\n")
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc


def hyperplane_value(y_i, h_i: float, x) -> float:
    """Value <y_i, x> + h_i of one hyperplane at x."""
    y_i = np.asarray(y_i, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if y_i.shape != x.shape:
        raise DimensionMismatch(f"y has dim {y_i.shape[0]}, x has dim {x.shape[0]}")
    return float(y_i @ x + h_i)


def assign_cell(fs, h, x) -> int:
    """Index of the hyperplane attaining the envelope maximum at x.

    Ties break to the lowest index (np.argmax's first-occurrence rule),
    so the assignment is deterministic. Indices are 0-based.
    """
    Y = _vectors_of(fs)
    hv = _heights_of(h)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != Y.shape[1]:
        raise DimensionMismatch(f"x has dim {x.shape[0]}, targets have dim {Y.shape[1]}")
    if hv.shape[0] != Y.shape[0]:
        raise DimensionMismatch("heights length does not match target count")
    return int(np.argmax(Y @ x + hv))


def _estimate(Y: np.ndarray, hv: np.ndarray, M: int, key: tuple,
              threads: int = 1, keep_samples: bool = True) -> CellStatistics:
    n, d = Y.shape
    n_chunks = (M + rng.CHUNK_SAMPLES - 1) // rng.CHUNK_SAMPLES
    Yt = np.ascontiguousarray(Y.T)

    def run_chunk(c: int):
        size = min(rng.CHUNK_SAMPLES, M - c * rng.CHUNK_SAMPLES)
        gen = rng.stream(*key, c)
        z = rng.normal_matrix(gen, size, d)
        scores = z @ Yt
        scores += hv
        idx = np.argmax(scores, axis=1)
        counts = np.bincount(idx, minlength=n)
        if not keep_samples:
            return counts, None, None
        sums = np.zeros((n, d))
        np.add.at(sums, idx, z)
        return counts, sums, (z, idx)

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, range(n_chunks)))
    else:
        parts = [run_chunk(c) for c in range(n_chunks)]

    counts = np.zeros(n, dtype=np.int64)
    sums = np.zeros((n, d))
    for part_counts, part_sums, _ in parts:  # fixed chunk order: deterministic
        counts += part_counts
        if part_sums is not None:
            sums += part_sums

    frequencies = counts / M
    centers = np.full((n, d), np.nan)
    nonempty = counts > 0
    if keep_samples:
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        samples = np.vstack([p[2][0] for p in parts])
        assignments = np.concatenate([p[2][1] for p in parts])
    else:
        samples, assignments = None, None
    return CellStatistics(frequencies=frequencies, member_counts=counts,
                          centers=centers, samples=samples,
                          assignments=assignments)


def estimate_cell_stats(fs, h, M: int, seed: int, threads: int = 1) -> CellStatistics:
    """Estimate cell frequencies and mass centers from M Gaussian samples.

    Accepts a FeatureSet or a raw N x d array (the N=1 degenerate case is
    allowed at this level). Samples are drawn in fixed-size chunks with one
    substream per chunk, so the result is bit-identical for any `threads`.
    """
    if M < 1:
        raise InvalidSpec("M must be >= 1")
    Y = _vectors_of(fs)
    hv = _heights_of(h)
    if hv.shape[0] != Y.shape[0]:
        raise DimensionMismatch("heights length does not match target count")
    return _estimate(Y, hv, M, (seed,), threads=threads)


def energy(stats, n: int) -> float:
    """Quadratic deviation of cell frequencies from the uniform weight 1/N."""
    w = stats.frequencies if isinstance(stats, CellStatistics) else np.asarray(stats)
    if w.shape[0] != n:
        raise DimensionMismatch(f"got {w.shape[0]} frequencies for N={n}")
    dev = w - 1.0 / n
    return float(dev @ dev)


def height_gradient(stats, n: int) -> np.ndarray:
    """Energy gradient (w - 1/N), re-centered to exact zero mean.

    The frequencies sum to 1, so the mean of (w - 1/N) is already zero in
    exact arithmetic; subtracting it anyway cancels floating-point drift and
    keeps the height update inside the zero-sum subspace.
    """
    w = stats.frequencies if isinstance(stats, CellStatistics) else np.asarray(stats)
    if w.shape[0] != n:
        raise DimensionMismatch(f"got {w.shape[0]} frequencies for N={n}")
    g = w - 1.0 / n
    return g - g.mean()


def solve(fs, cfg: SolverConfig = SolverConfig(),
          threads: int = 1) -> tuple[HeightVector, CellStatistics, SolveReport]:
    """Optimize heights until the cell decomposition carries uniform mass.

    Per epoch: draw a batch, estimate frequencies, check convergence, take
    one Adam step on the centered gradient, and double the batch / decay
    the learning rate after `patience` epochs without a new minimum.
    Convergence requires a fresh certification batch (at least
    EVAL_FLOOR_SAMPLES draws) to show both energy below eta and per-cell
    deviations within `measure_deviation_bound`. On success returns the
    certified heights, the certification batch's statistics (samples
    retained), and a report. Raises NotConverged with the best heights in
    the payload when max_epochs is exhausted.
    """
    Y = _vectors_of(fs)
    n, d = Y.shape
    if n < 2:
        raise InvalidSpec("solving needs at least 2 target vectors")
    m_cur = cfg.batch_size if cfg.batch_size is not None else 10 * n
    lr = cfg.learning_rate
    h = np.zeros(n)
    adam_m = np.zeros(n)
    adam_v = np.zeros(n)
    best_energy = np.inf
    best_h = h.copy()
    stale = 0
    next_cert_epoch = 0
    report = SolveReport(final_energy=np.inf, epochs_run=0, converged=False,
                         batch_size_trajectory=[(0, m_cur)],
                         lr_trajectory=[(0, lr)])
    last_stats = None

    for epoch in range(cfg.max_epochs):
        stats = _estimate(Y, h, m_cur, (cfg.seed, rng.DOMAIN_TRAIN, epoch),
                          threads=threads, keep_samples=False)
        e_batch = energy(stats, n)
        report.energy_trajectory.append((epoch, e_batch))
        report.epochs_run = epoch + 1
        last_stats = stats

        if e_batch < cfg.eta and epoch >= next_cert_epoch:
            m_eval = max(m_cur, 10 * n, EVAL_FLOOR_SAMPLES)
            eval_stats = _estimate(Y, h, m_eval,
                                   (cfg.seed, rng.DOMAIN_EVAL, epoch),
                                   threads=threads, keep_samples=True)
            e_eval = energy(eval_stats, n)
            max_dev = float(np.abs(eval_stats.frequencies - 1.0 / n).max())
            if e_eval < cfg.eta and max_dev <= certification_bound(
                    n, m_eval, cfg.eta):
                report.final_energy = e_eval
                report.converged = True
                return HeightVector(h), eval_stats, report
            next_cert_epoch = epoch + CERT_COOLDOWN_EPOCHS

        if e_batch < best_energy:
            best_energy = e_batch
            best_h = h.copy()
            stale = 0
        else:
            stale += 1
        if stale >= cfg.patience:
            m_cur = int(round(cfg.batch_growth * m_cur))
            lr = cfg.lr_decay * lr
            stale = 0
            report.batch_size_trajectory.append((epoch, m_cur))
            report.lr_trajectory.append((epoch, lr))

        g = height_gradient(stats, n)
        t = epoch + 1
        adam_m = cfg.adam_beta1 * adam_m + (1 - cfg.adam_beta1) * g
        adam_v = cfg.adam_beta2 * adam_v + (1 - cfg.adam_beta2) * g * g
        m_hat = adam_m / (1 - cfg.adam_beta1 ** t)
        v_hat = adam_v / (1 - cfg.adam_beta2 ** t)
        h = h - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        h = h - h.mean()

    report.final_energy = best_energy
    raise NotConverged(
        f"energy {best_energy:.3e} still above eta={cfg.eta:.3e} "
        f"after {cfg.max_epochs} epochs",
        heights=HeightVector(best_h), stats=last_stats, report=report,
    )


def save_heights(h, path, seed: int = 0, final_energy: float = np.nan) -> None:
    """Persist heights as NPHT v1 with a (seed, final energy) footer."""
    hv = _heights_of(h)
    try:
        with open(path, "wb") as fh:
            fh.write(_NPHT_HEADER.pack(NPHT_MAGIC, NPHT_VERSION, hv.shape[0]))
            fh.write(np.ascontiguousarray(hv, dtype="<f8").tobytes())
            fh.write(_NPHT_FOOTER.pack(seed, final_energy))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_heights(path) -> tuple[HeightVector, int, float]:
    """Read NPHT v1; returns (heights, seed, final_energy)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(raw) < _NPHT_HEADER.size + _NPHT_FOOTER.size:
        raise MalformedFile(f"{path}: truncated height file")
    magic, version, n = _NPHT_HEADER.unpack_from(raw, 0)
    if magic != NPHT_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}")
    if version != NPHT_VERSION:
        raise MalformedFile(f"{path}: unsupported version {version}")
    expect = _NPHT_HEADER.size + n * 8 + _NPHT_FOOTER.size
    if len(raw) != expect:
        raise MalformedFile(
            f"{path}: file length {len(raw)} does not match N={n} "
            f"(expected {expect})"
        )
    heights = np.frombuffer(raw, dtype="<f8", count=n,
                            offset=_NPHT_HEADER.size).astype(np.float64)
    seed, final_energy = _NPHT_FOOTER.unpack_from(raw, _NPHT_HEADER.size + n * 8)
    return HeightVector(heights), seed, final_energy
