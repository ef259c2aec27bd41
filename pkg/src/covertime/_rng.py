"""Seed derivation: every random draw is keyed by (seed, replica, stream)."""

import numpy as np

# stream tags keep the field, walk and 1D samplers decorrelated
FIELD = 1
WALK = 2
LINEAR = 3
COMPOUND = 4
BRIDGE = 5
RACE = 6
FIELD_PRIME = 7


def replica_seed(seed: int, replica: int, stream: int) -> int:
    """32-bit seed for the compiled Mersenne Twister kernels."""
    return int(np.random.SeedSequence([int(seed), int(replica), int(stream)]).generate_state(1)[0])


def replica_seeds(seed: int, replicas, stream: int) -> np.ndarray:
    return np.array([replica_seed(seed, r, stream) for r in replicas], dtype=np.uint32)


def replica_rng(seed: int, replica: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replica), int(stream)]))
