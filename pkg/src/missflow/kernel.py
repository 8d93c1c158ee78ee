"""Localizing RBF kernel and the pairwise-distance bandwidth heuristic."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

# All-pairs distances are O(m^2); above this row count the heuristic works
# on a seeded subsample instead.
MAX_EXACT_ROWS = 2000

__all__ = ["Bandwidth", "as_bandwidth", "rbf_kernel", "rbf_weights", "median_heuristic"]


@dataclass(frozen=True)
class Bandwidth:
    """Kernel length scale, in the units of the data coordinates."""

    sigma: float

    def __post_init__(self) -> None:
        sigma = float(self.sigma)
        if not math.isfinite(sigma) or sigma <= 0:
            raise ValueError(f"bandwidth must be a positive finite float, got {sigma!r}")
        object.__setattr__(self, "sigma", sigma)


def as_bandwidth(value: Bandwidth | float) -> Bandwidth:
    return value if isinstance(value, Bandwidth) else Bandwidth(float(value))


def rbf_kernel(x: np.ndarray, y: np.ndarray, sigma: Bandwidth | float) -> float:
    """exp(-||x - y||^2 / (2 sigma^2)) for two equal-length vectors."""
    sigma = as_bandwidth(sigma)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape or x.size < 1:
        raise ValueError(f"need equal-length vectors, got shapes {x.shape} and {y.shape}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite kernel input")
    diff = x - y
    return math.exp(-float(diff @ diff) / (2.0 * sigma.sigma**2))


def rbf_weights(points: np.ndarray, query: np.ndarray, sigma: Bandwidth | float) -> np.ndarray:
    """Kernel weight of each row of ``points`` against one query vector."""
    sigma = as_bandwidth(sigma)
    points = np.asarray(points, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if points.ndim != 2 or query.shape != (points.shape[1],):
        raise ValueError(f"shape mismatch: points {points.shape}, query {query.shape}")
    diff = points - query
    return np.exp(-(diff * diff).sum(axis=1) / (2.0 * sigma.sigma**2))


def median_heuristic(
    sample: np.ndarray,
    rng: np.random.Generator | None = None,
    max_rows: int = MAX_EXACT_ROWS,
) -> Bandwidth:
    """Median pairwise Euclidean distance of the sample rows.

    The median of an even-length distance list is the lower of the two
    middle values, so the result is always an actual pairwise distance.
    For more than ``max_rows`` rows the distances are computed on a
    uniform row subsample drawn from ``rng``.
    """
    sample = np.asarray(sample, dtype=np.float64)
    if sample.ndim != 2 or sample.shape[0] < 2:
        raise ValueError(f"need at least two sample rows, got shape {sample.shape}")
    if not np.isfinite(sample).all():
        raise ValueError("non-finite sample row")
    if sample.shape[0] > max_rows:
        if rng is None:
            rng = np.random.default_rng(0)
        keep = rng.choice(sample.shape[0], size=max_rows, replace=False)
        sample = sample[np.sort(keep)]
    distances = pdist(sample)
    order = (distances.size - 1) // 2
    sigma = float(np.partition(distances, order)[order])
    if sigma <= 0:
        raise ValueError("zero median distance: sampled rows are identical")
    return Bandwidth(sigma)
