"""Deterministic per-path random streams and basic Monte Carlo estimators.

Each stream is keyed by ``(master_seed, path_index, substream)``.  The key is
hashed through :class:`numpy.random.SeedSequence` into a Philox key, so a path
always sees the same numbers no matter how the paths are split across
workers.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

BROWNIAN = 0


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    path_index: int
    substream: int = BROWNIAN

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            [self.master_seed & 0xFFFFFFFFFFFFFFFF, self.path_index, self.substream])
        return np.random.Generator(np.random.Philox(seq))


def gaussian_increments(key: StreamKey, n: int, m: int, dt: float) -> np.ndarray:
    """``n`` i.i.d. N(0, dt I_m) vectors, shape (n, m)."""
    if n < 0 or m < 1:
        raise InvalidArgument(f"need n >= 0 and m >= 1, got n={n}, m={m}")
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt}")
    if n == 0:
        return np.empty((0, m))
    return np.sqrt(dt) * key.generator().standard_normal((n, m))


def brownian_block(master_seed, n_paths, n_steps, m, dt, n_workers=1, out=None, path_offset=0):
    """Brownian increments for global paths ``path_offset .. path_offset + n_paths - 1``,
    shape (n_paths, n_steps, m).

    The result does not depend on ``n_workers``: chunks only change who fills
    which rows.
    """
    if out is None:
        out = np.empty((n_paths, n_steps, m))

    def fill(lo, hi):
        for p in range(lo, hi):
            out[p] = gaussian_increments(StreamKey(master_seed, path_offset + p), n_steps, m, dt)

    n_workers = max(1, int(n_workers))
    if n_workers == 1 or n_paths < 2:
        fill(0, n_paths)
    else:
        bounds = np.linspace(0, n_paths, n_workers + 1).astype(int)
        with ThreadPoolExecutor(n_workers) as pool:
            list(pool.map(fill, bounds[:-1], bounds[1:]))
    return out


def mean_stderr(samples):
    """Componentwise sample mean and standard error along axis 0.

    With a single sample the standard error is NaN (undefined).
    """
    a = np.asarray(samples, dtype=float)
    if a.ndim == 0 or a.shape[0] == 0:
        raise InvalidArgument("mean_stderr needs at least one sample")
    n = a.shape[0]
    mean = exact_mean(a)
    if n < 2:
        return mean, np.full_like(np.asarray(mean, dtype=float), np.nan)
    return mean, np.std(a, axis=0, ddof=1) / np.sqrt(n)


def exact_mean(a):
    """Mean along axis 0 that returns the common value bitwise when all rows agree."""
    a = np.asarray(a, dtype=float)
    if np.all(a == a[0]):
        return a[0].copy() if a.ndim > 1 else float(a[0])
    m = a.mean(axis=0)
    return m if a.ndim > 1 else float(m)


def pooled_stderr(*stderrs):
    """Standard error of a difference of independent estimates."""
    return np.sqrt(sum(np.asarray(s, dtype=float) ** 2 for s in stderrs))
