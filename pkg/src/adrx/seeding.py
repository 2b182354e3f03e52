"""Deterministic seed derivation so every run replays from one root seed."""

import numpy as np


def derived_seed(*parts: int) -> int:
    """Collapse a root seed plus context tags (fold, iteration, view index)
    into one independent child seed via a SeedSequence."""
    parts = tuple(int(p) for p in parts)
    if any(p < 0 for p in parts):
        raise ValueError("seed parts must be non-negative")
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])
