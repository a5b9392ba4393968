"""Counter-based random numbers.

Every draw is ``finalize(key + (counter + 1) * GOLDEN)`` with the SplitMix64
finalizer, so a value depends only on ``(key, counter)``. Environment sites
use the site index as counter; trajectories use a per-replica key and a
running draw counter. The numba kernels carry a scalar copy of the same
arithmetic (see ``kernels._numba``); the two must stay bit-identical.
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
ONE = np.uint64(1)
SH30 = np.uint64(30)
SH27 = np.uint64(27)
SH31 = np.uint64(31)
SH11 = np.uint64(11)
INV53 = 2.0 ** -53

ENV_SALT = 0x5EED_0E57_1A7E_0001
TRAJ_SALT = 0x5EED_7A1E_C705_0002
BOOT_SALT = 0x5EED_B007_57A9_0003

_MASK = (1 << 64) - 1


def _finalize(z):
    z = (z ^ (z >> SH30)) * MIX1
    z = (z ^ (z >> SH27)) * MIX2
    return z ^ (z >> SH31)


def hash64(key, counters):
    """Vectorized 64-bit hash of ``(key, counter)``; keys broadcast, counters may be negative."""
    c = np.asarray(counters, dtype=np.int64).view(np.uint64)
    return _finalize(np.asarray(key, dtype=np.uint64) + (c + ONE) * GOLDEN)


def uniforms(key, counters):
    """Open-interval uniforms in (0, 1) for each counter."""
    z = hash64(key, counters)
    return ((z >> SH11).astype(np.float64) + 0.5) * INV53


def mix_int(value):
    """SplitMix64 of a Python int, returned as a Python int in [0, 2**64)."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_key(seed, salt, index=None):
    """Stream key from a master seed, a purpose salt, and an optional index."""
    k = mix_int((int(seed) & _MASK) ^ salt)
    if index is not None:
        k = mix_int((k + int(index) * 0x9E3779B97F4A7C15) & _MASK)
    return k


def env_key(seed):
    return derive_key(seed, ENV_SALT)


def replica_env_seed(master_seed, replica):
    """Environment seed for replica ``replica`` in annealed runs."""
    return derive_key(master_seed, ENV_SALT, replica + 1)


def trajectory_key(master_seed, replica):
    return derive_key(master_seed, TRAJ_SALT, replica)


def bootstrap_generator(seed):
    """numpy Generator for resampling; separate from simulation streams."""
    return np.random.default_rng(derive_key(seed, BOOT_SALT))
