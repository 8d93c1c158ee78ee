"""Discretized particle evolution of the pattern-averaged velocity field.

Starting from an ensemble initialized by column-marginal resampling, each
step moves every particle by step_size times its aggregated velocity against
the frozen ensemble of the previous step. The run stops early once the mean
velocity norm falls below a tolerance relative to the mean particle norm,
and the step size is halved for the rest of the run whenever the mean
velocity norm increases between consecutive steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np

from ._rng import stream
from .dataset import (
    MaskedDataset,
    PatternGroup,
    apply_standardizer,
    fit_standardizer,
    partition_by_pattern,
)
from .evaluate import standardized_energy
from .kernel import Bandwidth, as_bandwidth, median_heuristic
from .velocity import LinearSolveError, ensemble_velocities

logger = logging.getLogger(__name__)

MEDIAN_BANDWIDTH = "median"

__all__ = [
    "MEDIAN_BANDWIDTH",
    "FlowConfig",
    "ParticleEnsemble",
    "StepDiagnostics",
    "FlowReport",
    "NumericalAbort",
    "initialize_marginal",
    "step",
    "run",
    "objective_trace",
]


@dataclass(frozen=True)
class FlowConfig:
    """All knobs of one generation run.

    ``bandwidth`` is a positive float, a :class:`Bandwidth`, or the string
    "median" to resolve it from the initial ensemble by the median pairwise
    distance heuristic. ``sample_size`` defaults to the dataset's row count.
    """

    step_size: float = 0.01
    max_steps: int = 1000
    bandwidth: Bandwidth | float | str = MEDIAN_BANDWIDTH
    tikhonov_eps: float = 1e-5
    early_stop_tol: float = 0.01
    standardize: bool = True
    sample_size: int | None = None
    seed: int = 0
    threads: int = 1
    trace: bool = False
    trace_every: int = 50
    trace_path: str | Path | None = None

    def __post_init__(self) -> None:
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.tikhonov_eps < 0 or self.early_stop_tol < 0:
            raise ValueError("tikhonov_eps and early_stop_tol must be nonnegative")
        if self.sample_size is not None and self.sample_size < 1:
            raise ValueError("sample_size must be positive")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.trace_every < 1:
            raise ValueError("trace_every must be at least 1")
        if isinstance(self.bandwidth, str):
            if self.bandwidth not in (MEDIAN_BANDWIDTH, "median-heuristic"):
                raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
        else:
            as_bandwidth(self.bandwidth)


@dataclass(frozen=True)
class ParticleEnsemble:
    """Generated particles at one time step; rows are fully observed."""

    particles: np.ndarray
    step: int = 0

    def __post_init__(self) -> None:
        particles = np.array(self.particles, dtype=np.float64)
        if particles.ndim != 2 or particles.shape[0] < 1:
            raise ValueError(f"particles must be a nonempty matrix, got {particles.shape}")
        particles.setflags(write=False)
        object.__setattr__(self, "particles", particles)

    @property
    def size(self) -> int:
        return self.particles.shape[0]


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step summary: velocity-to-position norm ratio, mean velocity norm,
    and kernel-underflow events."""

    relative_change: float
    grad_norm: float
    underflow_count: int


@dataclass
class FlowReport:
    """Observability record of one run."""

    steps_run: int = 0
    stopped_early: bool = False
    eta_history: list[tuple[int, float]] = field(default_factory=list)
    relative_change_history: list[float] = field(default_factory=list)
    grad_norm_history: list[float] = field(default_factory=list)
    kernel_underflow_count: int = 0
    sigma: float = float("nan")
    snapshots: list[tuple[int, np.ndarray]] | None = None


class NumericalAbort(RuntimeError):
    """The run produced non-finite particles; carries the partial report."""

    def __init__(self, message: str, report: FlowReport):
        super().__init__(message)
        self.report = report


def initialize_marginal(
    ds: MaskedDataset, n_tilde: int, rng: np.random.Generator
) -> ParticleEnsemble:
    """Initial ensemble: dataset rows with holes filled from column marginals.

    With ``n_tilde`` equal to the row count, particle i copies row i; otherwise
    rows are drawn uniformly with replacement first. Each masked cell is then
    replaced by a uniform draw (with replacement) from its column's observed
    values; cells are filled column by column in row order.
    """
    if n_tilde < 1:
        raise ValueError("n_tilde must be positive")
    if n_tilde == ds.n:
        row_idx = np.arange(ds.n)
    else:
        row_idx = rng.integers(0, ds.n, size=n_tilde)
    particles = np.array(ds.values[row_idx])
    holes = ds.mask[row_idx]
    for j in range(ds.d):
        hole_rows = np.flatnonzero(holes[:, j])
        if hole_rows.size:
            observed = ds.observed_column(j)
            picks = rng.integers(0, observed.size, size=hole_rows.size)
            particles[hole_rows, j] = observed[picks]
    return ParticleEnsemble(particles, 0)


def step(
    ensemble: ParticleEnsemble,
    groups: list[PatternGroup],
    sigma: Bandwidth | float,
    config: FlowConfig,
    eta: float | None = None,
) -> tuple[ParticleEnsemble, StepDiagnostics]:
    """Advance every particle by eta times its velocity against the frozen
    ensemble.

    The relative change is the mean velocity norm over the mean particle
    norm, both taken at the pre-step positions.
    """
    if eta is None:
        eta = config.step_size
    positions = ensemble.particles
    velocities, underflow = ensemble_velocities(
        groups, positions, sigma, config.tikhonov_eps, threads=config.threads
    )
    grad_norm = float(np.linalg.norm(velocities, axis=1).mean())
    position_norm = float(np.linalg.norm(positions, axis=1).mean())
    relative_change = grad_norm / position_norm if position_norm > 0 else float("inf")
    with np.errstate(over="ignore", invalid="ignore"):
        moved = positions + eta * velocities
    if not np.isfinite(moved).all():
        raise LinearSolveError("non-finite particle update")
    return (
        ParticleEnsemble(moved, ensemble.step + 1),
        StepDiagnostics(relative_change, grad_norm, underflow),
    )


def _resolve_bandwidth(config: FlowConfig, initial: np.ndarray) -> Bandwidth:
    if isinstance(config.bandwidth, str):
        return median_heuristic(initial, rng=stream(config.seed, "subsample"))
    return as_bandwidth(config.bandwidth)


def run(ds: MaskedDataset, config: FlowConfig) -> tuple[np.ndarray, FlowReport]:
    """Full generation pipeline; returns the generated matrix and a report.

    Standardization (when enabled) is fitted on observed entries, the flow
    runs in standardized coordinates, and the generated sample is mapped
    back to original coordinates at the end. Deterministic for a fixed seed
    and any thread count.
    """
    standardizer = None
    work = ds
    if config.standardize:
        standardizer = fit_standardizer(ds)
        work = apply_standardizer(ds, standardizer, "forward")
    groups = partition_by_pattern(work)
    if not groups:
        raise ValueError("no usable rows: every row is fully missing")
    n_tilde = config.sample_size if config.sample_size is not None else work.n
    ensemble = initialize_marginal(work, n_tilde, stream(config.seed, "init"))
    sigma = _resolve_bandwidth(config, ensemble.particles)

    report = FlowReport(sigma=sigma.sigma)
    report.eta_history.append((0, config.step_size))
    if config.trace:
        report.snapshots = []

    def to_output(particles: np.ndarray) -> np.ndarray:
        if standardizer is not None:
            return apply_standardizer(particles, standardizer, "inverse")
        return np.array(particles)

    trace_file: IO[str] | None = None
    if config.trace and config.trace_path is not None:
        trace_file = Path(config.trace_path).open("w", encoding="utf-8")
        trace_file.write("step,relative_change,grad_norm,eta\n")
    eta = config.step_size
    prev_grad_norm: float | None = None
    try:
        for t in range(config.max_steps):
            if report.snapshots is not None and t % config.trace_every == 0:
                report.snapshots.append((t, to_output(ensemble.particles)))
            try:
                ensemble, diag = step(ensemble, groups, sigma, config, eta)
            except LinearSolveError as exc:
                report.steps_run = t
                raise NumericalAbort(str(exc), report) from exc
            report.steps_run = t + 1
            report.relative_change_history.append(diag.relative_change)
            report.grad_norm_history.append(diag.grad_norm)
            report.kernel_underflow_count += diag.underflow_count
            if trace_file is not None:
                trace_file.write(
                    f"{t},{diag.relative_change:.17g},{diag.grad_norm:.17g},{eta:.17g}\n"
                )
            if prev_grad_norm is not None and diag.grad_norm > prev_grad_norm:
                eta /= 2.0
                report.eta_history.append((t + 1, eta))
            prev_grad_norm = diag.grad_norm
            if diag.relative_change < config.early_stop_tol:
                report.stopped_early = True
                break
    finally:
        if trace_file is not None:
            trace_file.close()
    if report.snapshots is not None:
        last = report.snapshots[-1][0] if report.snapshots else -1
        if last != report.steps_run:
            report.snapshots.append((report.steps_run, to_output(ensemble.particles)))
    return to_output(ensemble.particles), report


def objective_trace(
    ensemble_history: list[tuple[int, np.ndarray]],
    heldout: np.ndarray,
) -> list[float]:
    """Standardized energy distance of each traced snapshot to a held-out
    complete sample (simulation mode only)."""
    heldout = np.asarray(heldout, dtype=np.float64)
    return [standardized_energy(snap, heldout).e2 for _, snap in ensemble_history]
