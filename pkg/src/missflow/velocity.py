"""Pattern-wise local-linear velocity estimation.

Near a query point, the density ratio between a pattern's observed rows and
the generated ensemble is approximated by a kernel-weighted linear fit
w.x + b on the pattern's observed coordinates. The fit's first-order
condition is a small symmetric linear system; its slope w estimates the
ratio's gradient, which is the drift driving the particle flow. Slopes are
zero-padded to full dimension on the pattern's missing coordinates and
averaged over patterns with weights proportional to pattern frequency.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import Pattern, PatternGroup
from .kernel import Bandwidth, as_bandwidth, rbf_weights

# Fixed batch width for the vectorized path. Keeping it constant (rather
# than deriving it from the worker count) makes results bit-identical for
# any number of threads.
CHUNK_ROWS = 512

__all__ = [
    "LinearSolveError",
    "LocalLinearSystem",
    "VelocityResult",
    "assemble_system",
    "solve_system",
    "pattern_velocity",
    "aggregate_velocity",
    "ensemble_velocities",
]


class LinearSolveError(RuntimeError):
    """The regularized local system could not be solved reliably."""


@dataclass(frozen=True)
class LocalLinearSystem:
    """Normal equations of one kernel-weighted local linear fit.

    ``matrix`` is the (p+1) x (p+1) symmetric moment matrix of the ensemble
    side, ``rhs`` the (p+1) moment vector of the observed side, with the
    intercept in the last position; p = ``n_observed``.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    n_observed: int


def _augment(points: np.ndarray) -> np.ndarray:
    """Append the intercept column of ones."""
    return np.hstack([points, np.ones((points.shape[0], 1))])


def assemble_system(
    group: PatternGroup,
    ensemble_sub: np.ndarray,
    query_sub: np.ndarray,
    sigma: Bandwidth | float,
) -> LocalLinearSystem:
    """Build the moment matrix and vector at one query point.

    ``ensemble_sub`` and ``query_sub`` must already be restricted to the
    group's observed coordinates. matrix = mean_i k_i z_i z_i^T over the
    ensemble and rhs = mean_i k_i z_i over the group rows, where
    z = (x, 1) and k is the RBF weight against the query.
    """
    ensemble_sub = np.asarray(ensemble_sub, dtype=np.float64)
    query_sub = np.asarray(query_sub, dtype=np.float64)
    p = group.pattern.n_observed
    if ensemble_sub.ndim != 2 or ensemble_sub.shape[1] != p or query_sub.shape != (p,):
        raise ValueError(
            f"expected {p}-column ensemble and {p}-vector query, got "
            f"{ensemble_sub.shape} and {query_sub.shape}"
        )
    # overflow is detected on the results, not left to warnings
    with np.errstate(over="ignore", invalid="ignore"):
        kw_ens = rbf_weights(ensemble_sub, query_sub, sigma)
        z_ens = _augment(ensemble_sub)
        matrix = (z_ens * kw_ens[:, None]).T @ z_ens / ensemble_sub.shape[0]
        matrix = (matrix + matrix.T) / 2.0
        kw_grp = rbf_weights(group.rows, query_sub, sigma)
        rhs = kw_grp @ _augment(group.rows) / group.n_rows
    if not (np.isfinite(matrix).all() and np.isfinite(rhs).all()):
        raise LinearSolveError("non-finite accumulation while assembling the local system")
    return LocalLinearSystem(matrix, rhs, p)


def solve_system(sys: LocalLinearSystem, epsilon: float) -> tuple[np.ndarray, float]:
    """Solve (matrix + epsilon*I) (w, b) = rhs by a direct dense solve.

    Returns the slope vector w and intercept b. Raises
    :class:`LinearSolveError` when the regularized matrix is numerically
    singular or the residual check fails, which signals a bandwidth far too
    small for the data.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    p = sys.n_observed
    a = sys.matrix + epsilon * np.eye(p + 1)
    try:
        solution = np.linalg.solve(a, sys.rhs)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveError(f"singular local system: {exc}") from exc
    residual = float(np.linalg.norm(a @ solution - sys.rhs))
    if not np.isfinite(solution).all() or residual > 1e-8 * max(1.0, float(np.linalg.norm(sys.rhs))):
        raise LinearSolveError(f"unreliable local solve, residual {residual:.3e}")
    return solution[:p], float(solution[p])


def pattern_velocity(
    group: PatternGroup,
    ensemble: np.ndarray,
    query: np.ndarray,
    sigma: Bandwidth | float,
    epsilon: float,
) -> tuple[np.ndarray, float]:
    """Slope of one pattern's local fit, zero-padded to full dimension."""
    obs = group.pattern.observed_idx
    sys = assemble_system(group, ensemble[:, obs], query[obs], sigma)
    w, b = solve_system(sys, epsilon)
    padded = np.zeros(ensemble.shape[1])
    padded[obs] = w
    return padded, b


@dataclass(frozen=True)
class VelocityResult:
    """Frequency-weighted average of per-pattern slopes at one query.

    Coordinates missing under every aggregated pattern are exactly zero.
    ``n_underflowed`` counts patterns whose ensemble-side kernel weights all
    underflowed to zero (isolated query), in which case the Tikhonov term
    alone determines that pattern's contribution.
    """

    velocity: np.ndarray
    per_pattern: dict[Pattern, tuple[np.ndarray, float]] | None = None
    n_underflowed: int = 0


def aggregate_velocity(
    groups: list[PatternGroup],
    ensemble: np.ndarray,
    query: np.ndarray,
    sigma: Bandwidth | float,
    epsilon: float,
    diagnostics: bool = False,
) -> VelocityResult:
    """Average the zero-padded pattern slopes with weights n_rows / n."""
    if not groups:
        raise ValueError("no pattern groups")
    n = sum(g.n_rows for g in groups)
    ensemble = np.asarray(ensemble, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    velocity = np.zeros(ensemble.shape[1])
    per_pattern: dict[Pattern, tuple[np.ndarray, float]] | None = {} if diagnostics else None
    underflowed = 0
    for group in groups:
        obs = group.pattern.observed_idx
        sys = assemble_system(group, ensemble[:, obs], query[obs], sigma)
        if sys.matrix[-1, -1] == 0.0:
            underflowed += 1
        w, b = solve_system(sys, epsilon)
        padded = np.zeros(ensemble.shape[1])
        padded[obs] = w
        velocity += (group.n_rows / n) * padded
        if per_pattern is not None:
            per_pattern[group.pattern] = (padded, b)
    return VelocityResult(velocity, per_pattern, underflowed)


def ensemble_velocities(
    groups: list[PatternGroup],
    ensemble: np.ndarray,
    sigma: Bandwidth | float,
    epsilon: float,
    queries: np.ndarray | None = None,
    threads: int = 1,
) -> tuple[np.ndarray, int]:
    """Aggregated velocity at every query row, vectorized over queries.

    Equivalent to calling :func:`aggregate_velocity` per row (up to float
    rounding of the batched contractions). Queries default to the ensemble
    itself. Work is split into fixed-size row chunks; threads only pick up
    chunks, so the result does not depend on the worker count.

    Returns the (n_queries, d) velocity matrix and the count of
    (query, pattern) pairs whose ensemble-side kernel weights underflowed.
    """
    if not groups:
        raise ValueError("no pattern groups")
    sigma = as_bandwidth(sigma)
    ensemble = np.ascontiguousarray(ensemble, dtype=np.float64)
    queries = ensemble if queries is None else np.ascontiguousarray(queries, dtype=np.float64)
    n = sum(g.n_rows for g in groups)
    n_ens = ensemble.shape[0]
    d = ensemble.shape[1]
    two_sigma_sq = 2.0 * sigma.sigma**2

    # Per-group tables shared by every chunk: observed-column slices of the
    # ensemble, the flattened z z^T product table, and the group moments.
    # Overflow surfaces as a LinearSolveError, not as warnings.
    tables = []
    with np.errstate(over="ignore", invalid="ignore"):
        for group in groups:
            obs = group.pattern.observed_idx
            p = group.pattern.n_observed
            x_ens = np.ascontiguousarray(ensemble[:, obs])
            z_ens = _augment(x_ens)
            zz = (z_ens[:, :, None] * z_ens[:, None, :]).reshape(n_ens, (p + 1) * (p + 1))
            x_grp = np.ascontiguousarray(group.rows)
            z_grp = _augment(x_grp)
            tables.append((group, obs, p, x_ens, zz, x_grp, z_grp))

    velocities = np.zeros((queries.shape[0], d))
    chunk_underflow = np.zeros(-(-queries.shape[0] // CHUNK_ROWS), dtype=np.int64)

    def run_chunk(c: int) -> None:
        lo = c * CHUNK_ROWS
        hi = min(lo + CHUNK_ROWS, queries.shape[0])
        with np.errstate(over="ignore", invalid="ignore"):
            for group, obs, p, x_ens, zz, x_grp, z_grp in tables:
                q_sub = queries[lo:hi][:, obs]
                kw_ens = np.exp(-cdist(q_sub, x_ens, "sqeuclidean") / two_sigma_sq)
                a = (kw_ens @ zz).reshape(hi - lo, p + 1, p + 1) / n_ens
                chunk_underflow[c] += int(np.count_nonzero(a[:, p, p] == 0.0))
                a[:, np.arange(p + 1), np.arange(p + 1)] += epsilon
                kw_grp = np.exp(-cdist(q_sub, x_grp, "sqeuclidean") / two_sigma_sq)
                rhs = (kw_grp @ z_grp) / group.n_rows
                try:
                    solution = np.linalg.solve(a, rhs[:, :, None])[:, :, 0]
                except np.linalg.LinAlgError as exc:
                    raise LinearSolveError(
                        f"singular local system in batch solve: {exc}"
                    ) from exc
                # same residual guarantee as solve_system
                residuals = np.linalg.norm(
                    np.einsum("qij,qj->qi", a, solution) - rhs, axis=1
                )
                bounds = 1e-8 * np.maximum(1.0, np.linalg.norm(rhs, axis=1))
                if not np.all(residuals <= bounds):
                    raise LinearSolveError(
                        f"unreliable batch solve, worst residual {residuals.max():.3e}"
                    )
                velocities[lo:hi, obs] += (group.n_rows / n) * solution[:, :p]

    n_chunks = chunk_underflow.shape[0]
    if threads <= 1 or n_chunks == 1:
        for c in range(n_chunks):
            run_chunk(c)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for future in [pool.submit(run_chunk, c) for c in range(n_chunks)]:
                future.result()
    if not np.isfinite(velocities).all():
        raise LinearSolveError("non-finite velocity estimate")
    return velocities, int(chunk_underflow.sum())
