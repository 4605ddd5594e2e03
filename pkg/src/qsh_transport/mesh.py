"""Uniform Brillouin-zone meshes and deterministic chunked evaluation."""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class BZMesh:
    """Points ``k(n) = sum_i (n_i / N_i) b_i`` in C order over ``n``, equal weights."""

    sizes: tuple
    reciprocal: np.ndarray

    @classmethod
    def for_model(cls, model, n):
        d = model.dimension
        sizes = (int(n),) * d if np.ndim(n) == 0 else tuple(int(x) for x in n)
        if len(sizes) != d or min(sizes) < 1:
            raise ValueError(f"mesh sizes {sizes} do not match dimension {d}")
        return cls(sizes, np.asarray(model.lattice.reciprocal))

    @property
    def dimension(self):
        return len(self.sizes)

    @property
    def n_points(self):
        return int(np.prod(self.sizes))

    @property
    def fractional(self):
        grids = np.meshgrid(*[np.arange(n) / n for n in self.sizes], indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    @property
    def kpts(self):
        return self.fractional @ self.reciprocal

    @property
    def weights(self):
        return np.full(self.n_points, 1.0 / self.n_points)

    @property
    def bz_volume(self):
        return abs(float(np.linalg.det(self.reciprocal)))

    @property
    def spacing(self):
        """Smallest Cartesian distance between neighbouring mesh points."""
        return min(np.linalg.norm(b) / n for b, n in zip(self.reciprocal, self.sizes))

    def metadata(self):
        return {"sizes": list(self.sizes), "n_points": self.n_points, "bz_volume": self.bz_volume}


def worker_count(workers=None):
    """Requested worker count, capped by ``QSH_THREADS`` when it is set."""
    n = int(workers) if workers else os.cpu_count() or 1
    cap = os.environ.get("QSH_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def map_chunks(fn, kpts, workers=None):
    """Apply ``fn`` to contiguous chunks of ``kpts`` and concatenate in index order.

    ``fn`` returns an array or a tuple of arrays (or ``None``) whose leading
    axis runs over k.  Every k-point is processed by the same code whatever
    the chunking, so results do not depend on the worker count.
    """
    n = worker_count(workers)
    if n == 1 or len(kpts) < 2 * n:
        return fn(kpts)
    bounds = np.linspace(0, len(kpts), n + 1).astype(int)
    chunks = [kpts[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=n) as pool:
        parts = list(pool.map(fn, chunks))
    return _concat(parts)


def _concat(parts):
    first = parts[0]
    if isinstance(first, tuple):
        return tuple(_concat([p[i] for p in parts]) for i in range(len(first)))
    if first is None:
        return None
    return np.concatenate(parts, axis=0)
