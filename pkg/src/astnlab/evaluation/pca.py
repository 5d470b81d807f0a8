from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Projection:
    coords: np.ndarray              # n x k
    components: np.ndarray          # k x d, rows orthonormal
    explained_variance_ratio: np.ndarray
    mean: np.ndarray


def pca_project(vectors, k: int = 2) -> Projection:
    """Project onto the top-k principal axes (SVD of the centered data).

    Each axis is signed so its first non-negligible loading is positive.
    Zero-variance input projects to zeros with zero explained variance.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("pca_project expects an n x d matrix")
    n, d = x.shape
    if n < 2 or d < k:
        raise ValueError(f"need n >= 2 and d >= k, got n={n}, d={d}, k={k}")
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    total = float(np.sum(s**2))
    comps = vt[:k].copy()
    if total <= 1e-300:
        return Projection(np.zeros((n, k)), comps, np.zeros(k), mean)
    for row in comps:
        nz = np.nonzero(np.abs(row) > 1e-12)[0]
        if nz.size and row[nz[0]] < 0:
            row *= -1
    ratio = np.zeros(k)
    ratio[: min(k, s.size)] = (s[:k] ** 2) / total
    return Projection(xc @ comps.T, comps, ratio, mean)
