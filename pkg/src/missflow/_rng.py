"""Named, counter-based random streams.

Every source of randomness in the package draws from a Philox generator
keyed by (run seed, purpose, index). Streams for different purposes never
overlap, so adding parallelism or reordering pipeline stages cannot change
what any single stage draws.
"""

from __future__ import annotations

import numpy as np

# Registry of stream purposes; extend here, never reuse an id.
_PURPOSES = {
    "init": 0,        # ensemble initialization (marginal resampling)
    "subsample": 1,   # bandwidth-heuristic row subsampling
    "simulate": 2,    # synthetic complete-data sampling
    "ampute": 3,      # missingness-pattern draws
    "mechanism": 4,   # random-pattern mechanism construction
}


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Return the generator for one named stream of a run."""
    try:
        purpose_id = _PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown rng purpose {purpose!r}") from None
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(purpose_id, index))
    return np.random.Generator(np.random.Philox(ss))
