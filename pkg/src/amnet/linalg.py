"""Dense float64 matrices, the sign-scale direction and a portable seeded RNG.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 in C
(row-major) order. ``SeededRng`` is xoshiro256** seeded through SplitMix64,
written out here so draw sequences do not depend on numpy's bit generators.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_matrix(a) -> np.ndarray:
    """Coerce ``a`` to a 2-D C-contiguous float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sign_scale(g: np.ndarray, eps: float) -> np.ndarray:
    """Return ``eps * sign(g)`` elementwise, with sign(0) = 0."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return eps * np.sign(g)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class SeededRng:
    """xoshiro256** generator whose 256-bit state is filled by SplitMix64(seed).

    Uniform doubles use the top 53 bits: ``(x >> 11) * 2**-53``, giving values
    in [0, 1). Bounded integers use the multiply-shift map ``(x * n) >> 64``.
    """

    def __init__(self, seed: int):
        if not 0 <= seed <= _MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        sm = seed
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def u64_array(self, n: int) -> np.ndarray:
        # inlined loop; this is the hot path for initialization and shuffling
        s0, s1, s2, s3 = self._s
        out = [0] * n
        m = _MASK64
        for i in range(n):
            x = (s1 * 5) & m
            out[i] = ((((x << 7) | (x >> 57)) & m) * 9) & m
            t = (s1 << 17) & m
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & m
        self._s = [s0, s1, s2, s3]
        return np.array(out, dtype=np.uint64)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1)."""
        bits = self.u64_array(n) >> np.uint64(11)
        return bits.astype(np.float64) * (1.0 / 9007199254740992.0)

    def integers_below(self, bounds) -> np.ndarray:
        """One integer in ``[0, b)`` per entry of ``bounds``."""
        bounds = [int(b) for b in bounds]
        raw = self.u64_array(len(bounds))
        return np.array([(int(x) * b) >> 64 for x, b in zip(raw, bounds)], dtype=np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        js = self.integers_below(range(n, 1, -1))
        for step, j in enumerate(js):
            i = n - 1 - step
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._s)

    def spawn(self, salt: int) -> "SeededRng":
        """Independent child stream derived from this seed and ``salt``."""
        _, mixed = splitmix64((self.seed ^ ((salt * 0xD1B54A32D192ED03) & _MASK64)) & _MASK64)
        return SeededRng(mixed)


def uniform_init(rng: SeededRng, rows: int, cols: int, scale: float) -> np.ndarray:
    """Matrix with entries i.i.d. uniform on [-scale, scale]."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    u = rng.uniform(rows * cols).reshape(rows, cols)
    return (2.0 * u - 1.0) * scale
