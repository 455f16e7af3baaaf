"""Shared test fixtures: cheap synthetic models that behave sensibly."""

import numpy as np

from sharedctl.arbitration import ArbitrationEstimator, arb_network
from sharedctl.intent import IntentEstimator, intent_network
from sharedctl.motion import MotionPolicy

DT = 0.05


def straight_field_records(n_traj=40, steps=12, seed=0, n_obstacles=0, v_ref=0.3):
    """Demos of constant-speed travel straight toward a per-trajectory target."""
    rng = np.random.default_rng(seed)
    records = []
    for k in range(n_traj):
        pos = rng.uniform(0.1, 0.9, size=2)
        target = rng.uniform(0.1, 0.9, size=2)
        obstacles = [tuple(rng.uniform(0.2, 0.8, size=3)) for _ in range(n_obstacles)]
        for t in range(steps):
            d = target - pos
            dist = float(np.hypot(*d))
            v = d / dist * min(v_ref, dist / DT) if dist > 1e-12 else d * 0.0
            records.append(
                {
                    "traj": k,
                    "t": t,
                    "pos": pos.tolist(),
                    "grabbed": int(k % 2),
                    "target": target.tolist(),
                    "obstacles": [list(o) for o in obstacles],
                    "velocity": v.tolist(),
                }
            )
            pos = pos + np.asarray(v) * DT
    return records


def toy_motion_policy(seed=3) -> MotionPolicy:
    """Small net trained to aim straight at the target feature."""
    return MotionPolicy(hidden=32, epochs=80, batch_size=32, seed=seed).fit(
        straight_field_records()
    )


def untrained_intent(hidden=10, seed=0) -> IntentEstimator:
    est = IntentEstimator(hidden_dim=hidden, seed=seed)
    est.network_ = intent_network(hidden)
    est.weights_ = est.network_.init_weights(seed)
    return est


def untrained_arbitration(hidden=8, seed=0) -> ArbitrationEstimator:
    est = ArbitrationEstimator(hidden=hidden, seed=seed)
    est.network_ = arb_network(est.n_features_, hidden)
    est.weights_ = est.network_.init_weights(seed)
    return est
