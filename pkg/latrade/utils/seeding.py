"""Deterministic 64-bit seed derivation."""

MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def derive_seed(master_seed: int, index: int) -> int:
    """Mix `master_seed` and a stream `index` into an independent 64-bit seed.

    One splitmix64 step over ``master_seed + (index + 1) * gamma``. The result only
    depends on the pair, so path sets do not change with the worker layout.

    >>> derive_seed(0, 0) == derive_seed(0, 0)
    True
    >>> derive_seed(42, 0) != derive_seed(42, 1)
    True
    >>> 0 <= derive_seed(-1, 7) <= MASK64
    True
    """
    z = (master_seed + (index + 1) * _GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)
