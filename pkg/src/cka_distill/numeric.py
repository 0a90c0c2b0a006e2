"""Dense float64 arithmetic, a seeded generator, and a central-difference gradient oracle."""
from __future__ import annotations

from typing import Callable

import numpy as np

MAX_DIMS = 3


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 array with 1 to 3 dims and finite entries."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if not 1 <= arr.ndim <= MAX_DIMS:
        raise ValueError(f"{name} must have 1 to {MAX_DIMS} dims, got shape {arr.shape}")
    if any(d == 0 for d in arr.shape):
        raise ValueError(f"{name} has an empty dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with a fixed accumulation order.

    Each output entry is summed over the inner index in ascending order using
    separately rounded multiplies and adds, so the result equals a plain triple
    loop bit for bit (no FMA, no blocked BLAS reordering).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def frobenius_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            idx = tuple(int(j) for j in np.unravel_index(i, x.shape))
            raise FloatingPointError(f"non-finite function value when perturbing index {idx}")
        g[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Largest per-entry ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {n.shape}")
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


class Rng:
    """Seeded generator backed by numpy's PCG64 bit generator.

    PCG64 (O'Neill's permuted congruential generator, 128-bit state) yields the
    same stream for the same seed on every platform numpy supports.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size=None, scale: float = 1.0) -> np.ndarray:
        return self._gen.standard_normal(size) * scale

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def spawn(self, key: int) -> "Rng":
        """Independent child generator derived from this generator's seed and ``key``."""
        ss = np.random.SeedSequence([self.seed, int(key)])
        return Rng(int(ss.generate_state(1, dtype=np.uint64)[0]))

    def next_u64(self) -> int:
        return int(self._gen.integers(0, 2**64, dtype=np.uint64))
