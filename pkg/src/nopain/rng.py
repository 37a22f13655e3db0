"""Seeded random sampling with a fixed, documented variate algorithm.

All normal variates in this package come from `normal_matrix`, which applies
the Box-Muller transform to uniform doubles drawn from a PCG64 stream. The
uniform step (`Generator.random`) maps bit-generator output to [0, 1) by a
fixed rule, so a given seed reproduces the same bytes across builds and
numpy versions; nothing here relies on `Generator.standard_normal`, whose
stream is not guaranteed stable.

Substream splitting rule: every independent stream is keyed by a tuple of
unsigned integers fed to `numpy.random.SeedSequence` as its entropy, i.e.
`SeedSequence((seed, domain, *indices))`. Domains keep the solver's epoch
batches, evaluation batches, probes and synthetic mixtures from colliding.
Large sample requests are generated in fixed-size chunks, each from its own
substream, so results are identical no matter how many workers consume the
chunks.
"""

import numpy as np

# Domain tags for SeedSequence keys (arbitrary but frozen constants).
DOMAIN_TRAIN = 1
DOMAIN_EVAL = 2
DOMAIN_PROBE = 3
DOMAIN_SYNTH = 4

# Samples per substream chunk; fixed so chunking never depends on threads.
CHUNK_SAMPLES = 16384


def stream(*key: int) -> np.random.Generator:
    """PCG64 generator for the substream identified by an integer key tuple."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def uniform(gen: np.random.Generator, count: int) -> np.ndarray:
    """`count` uniform doubles in [0, 1) from the stream's fixed mapping."""
    return gen.random(count)


def normal_matrix(gen: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Standard-normal matrix of shape (rows, cols) via Box-Muller.

    Draws pairs (u1, u2) of uniforms, with u1 shifted to (0, 1] so the log
    is finite, and emits z0 = sqrt(-2 ln u1) cos(2 pi u2) followed by
    z1 = sqrt(-2 ln u1) sin(2 pi u2).
    """
    count = rows * cols
    pairs = (count + 1) // 2
    u1 = 1.0 - gen.random(pairs)
    u2 = gen.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(theta), radius * np.sin(theta)])
    return z[:count].reshape(rows, cols)


def derive_seed(*key: int) -> int:
    """Collapse a key tuple into a single u64 seed (for file footers etc.)."""
    return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint64)[0])
