"""Synthetic complete data and missing-at-random amputation.

The two benchmark families are three-dimensional: uniform marginals coupled
through a Gaussian copula between the first two columns, and a centered
Gaussian with the same correlation block. Both come with a three-pattern
MAR mechanism whose probabilities depend only on coordinates observed under
the respective pattern, plus a generic random-pattern mechanism calibrated
to a target missing-cell fraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from ._rng import stream
from .dataset import DataError, MaskedDataset, Pattern, default_column_names

FAMILY_UNIFORM = "uniform_copula"
FAMILY_GAUSSIAN = "gaussian"
FAMILIES = (FAMILY_UNIFORM, FAMILY_GAUSSIAN)

__all__ = [
    "FAMILY_UNIFORM",
    "FAMILY_GAUSSIAN",
    "FAMILIES",
    "SyntheticSpec",
    "MarMechanism",
    "CalibrationError",
    "normal_cdf",
    "normal_quantile",
    "sample_uniform_copula",
    "sample_gaussian",
    "three_pattern_mechanism",
    "amputate",
    "generic_logistic_mar",
]


def normal_cdf(x: np.ndarray | float) -> np.ndarray | float:
    """Standard normal CDF (erf-based, accurate to ~1e-15)."""
    return ndtr(x)


def normal_quantile(p: np.ndarray | float) -> np.ndarray | float:
    """Inverse standard normal CDF."""
    return ndtri(p)


@dataclass(frozen=True)
class SyntheticSpec:
    """Which synthetic family to draw, how many rows, and the seed."""

    family: str
    n: int
    dependence: float = 0.7
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if not -1.0 < self.dependence < 1.0:
            raise ValueError("dependence must lie in (-1, 1)")


def _covariance(dependence: float) -> np.ndarray:
    cov = np.eye(3)
    cov[0, 1] = cov[1, 0] = dependence
    return cov


def _latent_gaussian(spec: SyntheticSpec, rng: np.random.Generator | None) -> np.ndarray:
    if rng is None:
        rng = stream(spec.seed, "simulate")
    chol = np.linalg.cholesky(_covariance(spec.dependence))
    return rng.standard_normal((spec.n, 3)) @ chol.T


def sample_uniform_copula(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """n x 3 sample with uniform marginals on [0, 1].

    Dependence between the first two columns is induced by a Gaussian copula
    with the requested correlation; the third column is independent.
    """
    if spec.family != FAMILY_UNIFORM:
        raise ValueError(f"spec family is {spec.family!r}, expected {FAMILY_UNIFORM!r}")
    return np.asarray(normal_cdf(_latent_gaussian(spec, rng)))


def sample_gaussian(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """n x 3 centered Gaussian sample with unit variances and the requested
    correlation between the first two columns."""
    if spec.family != FAMILY_GAUSSIAN:
        raise ValueError(f"spec family is {spec.family!r}, expected {FAMILY_GAUSSIAN!r}")
    return _latent_gaussian(spec, rng)


@dataclass(frozen=True)
class MarMechanism:
    """Row-wise pattern distribution P(pattern k | row x).

    ``prob_fn(k, x)`` gives one pattern's probability for one full row and
    must depend on x only through the coordinates observed under pattern k
    (the MAR property); the all-observed pattern, which must be present,
    is exempt since it observes everything. ``batch_fn`` is an optional
    vectorized evaluation over a whole matrix.
    """

    patterns: tuple[Pattern, ...]
    prob_fn: Callable[[int, np.ndarray], float]
    kind: str
    batch_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if not any(p.all_observed for p in self.patterns):
            raise ValueError("mechanism must include the all-observed pattern")
        if len(set(self.patterns)) != len(self.patterns):
            raise ValueError("duplicate patterns")

    def probabilities(self, rows: np.ndarray) -> np.ndarray:
        """(n, n_patterns) matrix of pattern probabilities per row."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.patterns[0].d:
            raise ValueError(f"expected (n, {self.patterns[0].d}) rows, got {rows.shape}")
        if self.batch_fn is not None:
            return np.asarray(self.batch_fn(rows), dtype=np.float64)
        out = np.empty((rows.shape[0], len(self.patterns)))
        for i, row in enumerate(rows):
            for k in range(len(self.patterns)):
                out[i, k] = self.prob_fn(k, row)
        return out


def three_pattern_mechanism(family: str) -> MarMechanism:
    """The benchmark mechanism over patterns (0,0,0), (0,1,0), (1,0,0).

    For the uniform family the probabilities are (x1+x2)/3, (2-x1)/3 and
    (1-x2)/3; the Gaussian family applies the standard normal CDF to x1, x2
    first. Each masking pattern's probability depends only on its own
    observed coordinate, and the probabilities sum to one identically.
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    patterns = (
        Pattern((False, False, False)),
        Pattern((False, True, False)),
        Pattern((True, False, False)),
    )
    if family == FAMILY_UNIFORM:
        def u(values: np.ndarray) -> np.ndarray:
            return np.asarray(values, dtype=np.float64)
    else:
        def u(values: np.ndarray) -> np.ndarray:
            return np.asarray(normal_cdf(values), dtype=np.float64)

    def prob_fn(k: int, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if k == 0:
            return float((u(x[0]) + u(x[1])) / 3.0)
        if k == 1:
            return float((2.0 - u(x[0])) / 3.0)
        if k == 2:
            return float((1.0 - u(x[1])) / 3.0)
        raise IndexError(k)

    def batch_fn(rows: np.ndarray) -> np.ndarray:
        u1, u2 = u(rows[:, 0]), u(rows[:, 1])
        return np.column_stack([(u1 + u2) / 3.0, (2.0 - u1) / 3.0, (1.0 - u2) / 3.0])

    return MarMechanism(patterns, prob_fn, kind=family.split("_")[0], batch_fn=batch_fn)


def amputate(
    complete: np.ndarray,
    mech: MarMechanism,
    rng: np.random.Generator,
    column_names: tuple[str, ...] | None = None,
) -> MaskedDataset:
    """Mask each row according to one pattern drawn from the mechanism.

    Observed cells keep their exact values. Raises when any row's
    probabilities leave [0, 1] or fail to sum to one within 1e-9.
    """
    complete = np.asarray(complete, dtype=np.float64)
    probs = mech.probabilities(complete)
    if (probs < -1e-12).any() or (probs > 1.0 + 1e-12).any():
        raise DataError("mechanism probability outside [0, 1]")
    sums = probs.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-9:
        raise DataError("mechanism probabilities do not sum to 1")
    draws = rng.random(complete.shape[0])
    cumulative = np.cumsum(probs, axis=1)
    chosen = np.minimum(
        (draws[:, None] >= cumulative).sum(axis=1), len(mech.patterns) - 1
    )
    bits = np.array([p.missing for p in mech.patterns], dtype=bool)
    mask = bits[chosen]
    if column_names is None:
        column_names = default_column_names(complete.shape[1])
    return MaskedDataset(complete, mask, column_names)


class CalibrationError(RuntimeError):
    """The missingness-fraction calibration did not converge."""


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _draw_patterns(d: int, count: int, rng: np.random.Generator) -> list[Pattern]:
    """Distinct patterns, each missing between 1 and d-1 coordinates."""
    seen: set[tuple[bool, ...]] = set()
    out: list[Pattern] = []
    guard = 0
    while len(out) < count:
        guard += 1
        if guard > 1000 * count:
            raise CalibrationError("could not draw enough distinct patterns")
        n_missing = int(rng.integers(1, d))
        cols = rng.choice(d, size=n_missing, replace=False)
        bits = tuple(j in set(cols.tolist()) for j in range(d))
        if bits not in seen:
            seen.add(bits)
            out.append(Pattern(bits))
    return out


def generic_logistic_mar(
    d: int,
    n_patterns: int,
    target_missing_frac: float,
    rng: np.random.Generator,
    pilot: np.ndarray | None = None,
    max_iter: int = 100,
) -> MarMechanism:
    """Random-pattern MAR mechanism hitting a target missing-cell fraction.

    Each masking pattern k gets probability sigmoid(w_k . x[obs_k] + theta)
    divided by the number of masking patterns, so it depends only on its own
    observed coordinates; the all-observed pattern takes the strictly
    positive remainder. The shared intercept theta is calibrated by
    bisection on a pilot sample (standard normal by default) so the expected
    fraction of masked cells matches the target.
    """
    if d < 2:
        raise ValueError("need d >= 2: a masking pattern must keep a coordinate observed")
    if not 2 <= n_patterns <= 2**d:
        raise ValueError("need 2 <= n_patterns <= 2^d")
    if not 0.0 < target_missing_frac <= 0.6:
        raise ValueError("target_missing_frac must be in (0, 0.6]")
    if pilot is None:
        pilot = rng.standard_normal((4096, d))
    pilot = np.asarray(pilot, dtype=np.float64)
    if pilot.ndim != 2 or pilot.shape[1] != d:
        raise ValueError(f"pilot must be (n, {d}), got {pilot.shape}")

    masking: list[Pattern] = []
    weights: list[np.ndarray] = []
    scores: list[np.ndarray] = []
    missing_counts = np.empty(0)
    for _ in range(50):
        masking = sorted(_draw_patterns(d, n_patterns - 1, rng), key=lambda p: p.missing)
        weights = []
        for pat in masking:
            w = rng.standard_normal(pat.n_observed)
            weights.append(w / np.linalg.norm(w))
        scores = [pilot[:, pat.observed_idx] @ w for pat, w in zip(masking, weights)]
        missing_counts = np.array([sum(p.missing) for p in masking], dtype=np.float64)
        # Reachability: even at full sigmoid saturation the expected masked
        # fraction cannot exceed the mean missing share of the drawn patterns.
        ceiling = missing_counts.mean() / d
        if ceiling > target_missing_frac:
            break
    else:
        raise CalibrationError(
            f"no reachable pattern set for target fraction {target_missing_frac}"
        )

    k_mask = len(masking)

    def expected_fraction(theta: float) -> float:
        total = 0.0
        for score, miss in zip(scores, missing_counts):
            total += float(_sigmoid(score + theta).mean()) / k_mask * (miss / d)
        return total

    lo, hi = -60.0, 60.0
    if not expected_fraction(lo) < target_missing_frac < expected_fraction(hi):
        raise CalibrationError("target fraction outside the calibrable range")
    theta = 0.0
    for _ in range(max_iter):
        theta = (lo + hi) / 2.0
        if expected_fraction(theta) < target_missing_frac:
            lo = theta
        else:
            hi = theta
    if abs(expected_fraction(theta) - target_missing_frac) > 0.005:
        raise CalibrationError("bisection did not reach the target fraction")

    patterns = (Pattern((False,) * d), *masking)

    def prob_fn(k: int, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if k == 0:
            total = 0.0
            for pat, w in zip(masking, weights):
                total += float(_sigmoid(np.atleast_1d(x[pat.observed_idx] @ w + theta))[0])
            return 1.0 - total / k_mask
        pat = masking[k - 1]
        w = weights[k - 1]
        return float(_sigmoid(np.atleast_1d(x[pat.observed_idx] @ w + theta))[0]) / k_mask

    def batch_fn(rows: np.ndarray) -> np.ndarray:
        cols = [
            _sigmoid(rows[:, pat.observed_idx] @ w + theta) / k_mask
            for pat, w in zip(masking, weights)
        ]
        stacked = np.column_stack(cols)
        return np.column_stack([1.0 - stacked.sum(axis=1), stacked])

    return MarMechanism(patterns, prob_fn, kind="logistic", batch_fn=batch_fn)
