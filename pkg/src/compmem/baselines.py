"""Exact reference detectors: covariance row sums, their expectations, 1-D k-means."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "WeightVector",
    "KMeansResult",
    "weights_streaming",
    "covariance_matrix",
    "expected_weights",
    "kmeans_1d",
    "write_weights_csv",
    "write_matrix_csv",
    "COVARIANCE_CAP",
]

COVARIANCE_CAP = 1024


@dataclass(frozen=True)
class WeightVector:
    """Row sums ``W_i = sum_j R_ij`` of the uncentered covariance estimate."""

    w: np.ndarray
    k_steps: int
    sums: np.ndarray = field(repr=False)  # exact integer sum_k X_i(k) M(k)

    def __len__(self) -> int:
        return len(self.w)


def weights_streaming(ensemble) -> WeightVector:
    """One pass over a replay of ``ensemble`` using ``W_i = (1/K) sum_k X_i(k) M(k)``.

    The accumulator is an exact int64, so the result does not depend on the
    order in which steps or processes are reduced.
    """
    src = ensemble.replay()
    if src.k_steps == 0:
        raise ValueError("cannot estimate weights from K = 0 steps")
    acc = np.zeros(src.n, dtype=np.int64)
    for x in src:
        m = int(np.count_nonzero(x))
        if m:
            acc += x * np.int64(m)
    w = acc / float(src.k_steps)
    return WeightVector(w=w, k_steps=src.k_steps, sums=acc)


def covariance_matrix(ensemble, cap: int = COVARIANCE_CAP) -> np.ndarray:
    """Dense ``R_ij = (1/K) sum_k X_i(k) X_j(k)``; only for ``N <= cap``."""
    src = ensemble.replay()
    if src.n > cap:
        raise ValueError(f"covariance matrix limited to N <= {cap} (got N = {src.n})")
    if src.k_steps == 0:
        raise ValueError("cannot estimate covariance from K = 0 steps")
    acc = np.zeros((src.n, src.n), dtype=np.int64)
    rows = []
    for x in src:
        rows.append(x)
        if len(rows) == 4096:
            b = np.asarray(rows, dtype=np.int64)
            acc += b.T @ b
            rows = []
    if rows:
        b = np.asarray(rows, dtype=np.int64)
        acc += b.T @ b
    return acc / float(src.k_steps)


def expected_weights(n: int, n_c: int, p: float, c: float) -> tuple[float, float]:
    """Expected weight of a (correlated, uncorrelated) process."""
    base = (n - 1) * p * p + p
    return base + (n_c - 1) * c * p * (1.0 - p), base


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray  # cluster index, ordered by centroid (k-1 = largest)
    centroids: np.ndarray  # ascending
    iterations: int
    inertia: list[float]  # within-cluster sum of squares after each assignment

    @property
    def threshold(self) -> float:
        """Decision point between the two top clusters."""
        return 0.5 * float(self.centroids[-2] + self.centroids[-1])


def _assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin keeps the first (lower) centroid on exact ties
    return np.argmin(np.abs(x[:, None] - centroids[None, :]), axis=1)


def kmeans_1d(values, k: int = 2, max_iter: int = 1000) -> KMeansResult:
    """Lloyd's algorithm on scalars, started from evenly spaced centroids
    between the minimum and the maximum (for ``k = 2``: exactly min and max).
    """
    x = np.asarray(values, dtype=float).ravel()
    if k < 2:
        raise ValueError("k must be >= 2")
    if np.unique(x).size < k:
        raise ValueError(f"need at least {k} distinct values, got {np.unique(x).size}")
    centroids = np.linspace(x.min(), x.max(), k)
    labels = _assign(x, centroids)
    inertia = []
    for it in range(1, max_iter + 1):
        for j in range(k):
            members = x[labels == j]
            if members.size:
                centroids[j] = members.mean()
        inertia.append(float(((x - centroids[labels]) ** 2).sum()))
        new = _assign(x, centroids)
        if np.array_equal(new, labels):
            break
        labels = new
    order = np.argsort(centroids, kind="stable")
    rank = np.empty(k, dtype=np.int64)
    rank[order] = np.arange(k)
    return KMeansResult(labels=rank[labels], centroids=centroids[order], iterations=it, inertia=inertia)


def write_weights_csv(path, weights: WeightVector) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["process_id", "weight"])
        for i, v in enumerate(weights.w):
            w.writerow([i, repr(float(v))])
    return path


def write_matrix_csv(path, matrix: np.ndarray) -> Path:
    path = Path(path)
    np.savetxt(path, np.asarray(matrix, dtype=float), delimiter=",", fmt="%.17g")
    return path
