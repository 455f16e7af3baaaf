"""Small helpers shared by the three training loops."""

from __future__ import annotations

import numpy as np


def grouped_split(n_groups: int, val_fraction: float, rng: np.random.Generator):
    """Deterministic train/validation split over group indices.

    Always leaves at least one group on each side when n_groups >= 2.
    """
    order = rng.permutation(n_groups)
    n_val = int(round(n_groups * val_fraction))
    if n_groups >= 2:
        n_val = min(max(n_val, 1), n_groups - 1)
    else:
        n_val = 0
    val = np.sort(order[:n_val])
    train = np.sort(order[n_val:])
    return train, val


def clone_weights(weights: dict) -> dict:
    return {name: arr.copy() for name, arr in weights.items()}
