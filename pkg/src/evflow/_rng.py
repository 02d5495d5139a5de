import numpy as np

SEED_MAX = 2**64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def make_rng(seed):
    """PCG64 generator for a 64-bit unsigned seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(check_seed(seed))))


def substreams(seed, count, *, key=()):
    """Independent generators derived from ``seed``.

    The i-th stream depends only on ``(seed, key, i)``, never on ``count``,
    so work split across a varying number of workers stays reproducible.
    """
    root = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(key))
    return [np.random.Generator(np.random.PCG64(s)) for s in root.spawn(count)]


def derive_seed(seed, *key):
    """A 64-bit seed for the sub-experiment labelled by integer ``key``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
