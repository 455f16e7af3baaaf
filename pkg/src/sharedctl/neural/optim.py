"""Adam with bias correction; pure-functional update."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(weights: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """One Adam update; returns fresh (weights, state) without mutating inputs."""
    t = state.step_count + 1
    new_w: dict = {}
    new_m: dict = {}
    new_v: dict = {}
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, w in weights.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        m = state.m.get(name, np.zeros_like(w))
        v = state.v.get(name, np.zeros_like(w))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_w[name] = w - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_w, AdamState(
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        step_count=t,
        m=new_m,
        v=new_v,
    )
