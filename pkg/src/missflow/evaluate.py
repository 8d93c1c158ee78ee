"""Scoring of generated samples: energy distance and marginal quantiles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .dataset import DataError, Standardizer

__all__ = ["EnergyReport", "energy_distance", "standardized_energy", "quantile"]


@dataclass(frozen=True)
class EnergyReport:
    """Squared energy distance between two column-standardized samples."""

    e2: float
    n_x: int
    n_y: int
    standardizer_source: str  # "heldout" or "external"


def _as_sample(x: np.ndarray, name: str) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"{name} must be a matrix with at least 2 rows, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite entries")
    return x


def energy_distance(x: np.ndarray, y: np.ndarray, unbiased: bool = False) -> float:
    """Squared energy distance 2 E||X-Y|| - E||X-X'|| - E||Y-Y'||.

    The default plug-in estimator averages over all ordered pairs including
    the zero diagonal, so the value is nonnegative up to float error. With
    ``unbiased`` the within-sample means exclude the diagonal, which can go
    negative. The cross-distance sum is evaluated in a canonical argument
    order so swapping x and y returns the exact same float.
    """
    x = _as_sample(x, "x")
    y = _as_sample(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"column mismatch: {x.shape[1]} vs {y.shape[1]}")
    a, b = x.shape[0], y.shape[0]
    if (x.shape, x.tobytes()) <= (y.shape, y.tobytes()):
        cross = float(cdist(x, y).sum())
    else:
        cross = float(cdist(y, x).sum())
    within_x = 2.0 * float(pdist(x).sum())
    within_y = 2.0 * float(pdist(y).sum())
    # combine the within terms by one commutative addition so the swapped
    # call reduces in the same order
    if unbiased:
        return 2.0 * cross / (a * b) - (within_x / (a * (a - 1)) + within_y / (b * (b - 1)))
    return 2.0 * cross / (a * b) - (within_x / a**2 + within_y / b**2)


def standardized_energy(
    generated: np.ndarray,
    heldout: np.ndarray,
    standardizer: Standardizer | None = None,
) -> EnergyReport:
    """Energy distance after standardizing both samples column-wise.

    Column means and standard deviations come from the held-out complete
    sample unless an external :class:`Standardizer` is supplied.
    """
    generated = _as_sample(generated, "generated")
    heldout = _as_sample(heldout, "heldout")
    if generated.shape[1] != heldout.shape[1]:
        raise ValueError(f"column mismatch: {generated.shape[1]} vs {heldout.shape[1]}")
    if standardizer is None:
        scale = heldout.std(axis=0, ddof=1)
        if (scale <= 0).any():
            raise DataError("zero-variance held-out column")
        standardizer = Standardizer(heldout.mean(axis=0), scale)
        source = "heldout"
    else:
        source = "external"
    gen_std = (generated - standardizer.mean) / standardizer.scale
    held_std = (heldout - standardizer.mean) / standardizer.scale
    e2 = energy_distance(gen_std, held_std)
    return EnergyReport(e2, generated.shape[0], heldout.shape[0], source)


def quantile(sample: np.ndarray, q: float) -> float:
    """Order-statistic quantile with linear interpolation at rank (len-1)*q."""
    sample = np.asarray(sample, dtype=np.float64).ravel()
    if sample.size < 1:
        raise ValueError("empty sample")
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    return float(np.quantile(sample, q))
