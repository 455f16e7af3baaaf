"""Scripted stand-ins for human operators.

A simulated user aims at its intended object (or, once carrying, at the
place target), with three knobs that caricature real operators: angular
noise, a constant curvature bias (operators tend to approach on arcs),
and compliance, a tendency to keep following the direction the blended
controller actually executed rather than re-aiming every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arbitration import rotate, signed_angle
from .env import Action, Phase, Role, WorldConfig, WorldState, is_success, reset, step
from .episodes import Episode, Mode, Outcome, StepRecord
from .errors import ConfigurationError

VECTOR_TOL = 1e-9


@dataclass(frozen=True)
class SimUserParams:
    goal_id: int
    v_pref: float = 0.35
    noise_sigma: float = 0.17
    curvature_bias: float = 0.0
    compliance: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.v_pref <= 0.0:
            raise ConfigurationError(f"v_pref must be positive, got {self.v_pref}")
        if not 0.0 <= self.compliance <= 1.0:
            raise ConfigurationError(f"compliance outside [0, 1]: {self.compliance}")
        if self.noise_sigma < 0.0:
            raise ConfigurationError(f"negative noise sigma: {self.noise_sigma}")
        if self.goal_id < 0:
            raise ConfigurationError(f"bad goal id: {self.goal_id}")


def user_command(
    params: SimUserParams,
    state: WorldState,
    cfg: WorldConfig,
    last_executed: Action | None,
    rng: np.random.Generator,
) -> Action:
    """One velocity command toward the current subgoal.

    heading = rotate(aim, bias + noise), optionally slerped toward the
    last executed direction by the compliance fraction; speed is v_pref
    with arrival braking (never overshoots the subgoal in one tick).
    """
    if state.phase is Phase.CARRY:
        subgoal = cfg.place_target.center
    else:
        subgoal = state.object_positions[params.goal_id]
    dx = subgoal[0] - state.gripper_pos[0]
    dy = subgoal[1] - state.gripper_pos[1]
    dist = math.hypot(dx, dy)
    if dist <= VECTOR_TOL:
        return Action((0.0, 0.0), Role.USER)
    base = (dx / dist, dy / dist)
    noise = float(rng.normal(0.0, params.noise_sigma))
    heading = rotate(base, params.curvature_bias + noise)
    if (
        params.compliance > 0.0
        and last_executed is not None
        and math.hypot(*last_executed.v) > VECTOR_TOL
    ):
        drift = signed_angle(heading, last_executed.v)
        heading = rotate(heading, params.compliance * drift)
    speed = min(params.v_pref, dist / cfg.dt)
    return Action((heading[0] * speed, heading[1] * speed), Role.USER)


class SimUser:
    """Stateful wrapper: owns the noise stream and the compliance memory."""

    def __init__(self, params: SimUserParams, seed: int | None = None):
        self.params = params
        self._rng = np.random.default_rng(params.seed if seed is None else seed)
        self._last_executed: Action | None = None

    def command(self, state: WorldState, cfg: WorldConfig) -> Action:
        return user_command(self.params, state, cfg, self._last_executed, self._rng)

    def observe_executed(self, action: Action) -> None:
        self._last_executed = action


def run_direct_episode(params: SimUserParams, cfg: WorldConfig, seed: int) -> Episode:
    """Closed loop of user commands executed verbatim (no assistance)."""
    if params.v_pref > cfg.v_max:
        raise ConfigurationError(
            f"v_pref {params.v_pref} exceeds world v_max {cfg.v_max}"
        )
    if params.goal_id >= len(cfg.goal_objects):
        raise ConfigurationError(f"goal id {params.goal_id} out of range")
    state, resolved = reset(cfg, seed)
    user = SimUser(params, seed)
    records = []
    while not is_success(state) and state.t < resolved.max_steps:
        a_u = user.command(state, resolved)
        records.append(StepRecord(t=state.t, state=state, a_u=a_u, a_s=a_u, alpha=0.0))
        state = step(state, a_u, resolved)
        user.observe_executed(a_u)
    return Episode(
        config=resolved,
        seed=seed,
        mode=Mode.DIRECT,
        true_goal=params.goal_id,
        outcome=Outcome.SUCCESS if is_success(state) else Outcome.TIMEOUT,
        steps=tuple(records),
    )
