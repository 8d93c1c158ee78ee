"""Shared fixtures: the two simulation challenges are expensive (20 full
flow runs each), so they are built once per session and reused by every
test that scores them."""

import time

import pytest

from missflow._rng import stream
from missflow.evaluate import quantile
from missflow.flow import FlowConfig, objective_trace, run
from missflow.simulate import (
    FAMILY_GAUSSIAN,
    FAMILY_UNIFORM,
    SyntheticSpec,
    amputate,
    sample_gaussian,
    sample_uniform_copula,
    three_pattern_mechanism,
)

CHALLENGE_N = 2000
CHALLENGE_SEEDS = 20
CHALLENGE_THREADS = 2


def _run_challenge(family):
    sampler = sample_uniform_copula if family == FAMILY_UNIFORM else sample_gaussian
    mech = three_pattern_mechanism(family)
    records = []
    for seed in range(CHALLENGE_SEEDS):
        started = time.perf_counter()
        spec = SyntheticSpec(family, CHALLENGE_N, 0.7, seed)
        train = sampler(spec, rng=stream(seed, "simulate", 0))
        heldout = sampler(spec, rng=stream(seed, "simulate", 1))
        masked = amputate(train, mech, stream(seed, "ampute"))
        config = FlowConfig(seed=seed, trace=True, trace_every=50, threads=CHALLENGE_THREADS)
        generated, report = run(masked, config)
        records.append(
            {
                "seed": seed,
                "q_generated": quantile(generated[:, 0], 0.1),
                "q_complete_case": quantile(masked.values[~masked.mask[:, 0], 0], 0.1),
                "snapshot_steps": [s for s, _ in report.snapshots],
                "energies": objective_trace(report.snapshots, heldout),
                "steps_run": report.steps_run,
                "stopped_early": report.stopped_early,
                "seconds": time.perf_counter() - started,
            }
        )
    return records


@pytest.fixture(scope="session")
def uniform_challenge():
    """B=20 generation runs on the uniform-marginals benchmark (n=2000)."""
    return _run_challenge(FAMILY_UNIFORM)


@pytest.fixture(scope="session")
def gaussian_challenge():
    """B=20 generation runs on the Gaussian benchmark (n=2000)."""
    return _run_challenge(FAMILY_GAUSSIAN)
