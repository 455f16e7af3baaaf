"""Per-tick shared-control decision chain.

One SharedController owns the recurrent sessions for a single episode:
intent consumes (position, user command) and produces goal estimates,
the motion policy proposes a command toward the predicted goal, the
arbitration source picks alpha per the control mode, and the blend
produces the executed command. Callers drive it with `decide` once per
tick and step the world themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arbitration import (
    AlphaValue,
    ArbitrationEstimator,
    TimidParams,
    arb_features,
    blend_linear,
    blend_rotational,
    timid_alpha,
)
from .env import Action, WorldConfig, WorldState
from .episodes import Mode
from .errors import ConfigurationError
from .intent import GRID, IntentEstimate, IntentEstimator, intent_features
from .motion import MotionPolicy


@dataclass(frozen=True)
class Decision:
    a_u: Action
    a_r: Action
    a_s: Action
    alpha: AlphaValue
    estimate: IntentEstimate


class SharedController:
    """Episode-scoped controller; construct (or reset) per episode.

    Test hooks: force_alpha pins alpha to a constant (any mode);
    perfect_goal bypasses the intent net with an oracle that always
    predicts the given goal at confidence 1.
    """

    def __init__(
        self,
        cfg: WorldConfig,
        mode: Mode,
        intent: IntentEstimator | None,
        motion: MotionPolicy,
        arbitration: ArbitrationEstimator | None = None,
        timid: TimidParams = TimidParams(),
        blend: str = "rotational",
        force_alpha: float | None = None,
        perfect_goal: int | None = None,
    ):
        if blend not in ("rotational", "linear"):
            raise ConfigurationError(f"unknown blend {blend!r}")
        if intent is None and perfect_goal is None:
            raise ConfigurationError("need an intent model or the perfect_goal hook")
        if (
            mode is Mode.SHARED_LEARNED
            and arbitration is None
            and force_alpha is None
        ):
            raise ConfigurationError("shared_learned mode needs an arbitration model")
        if motion.n_obstacles != len(cfg.obstacles):
            raise ConfigurationError(
                f"motion policy expects {motion.n_obstacles} obstacles, "
                f"config has {len(cfg.obstacles)}"
            )
        self.cfg = cfg
        self.mode = mode
        self.motion = motion
        self.timid = timid
        self.blend = blend
        self.force_alpha = force_alpha
        self.perfect_goal = perfect_goal
        self._intent_model = intent
        self._arb_model = arbitration
        self._obstacles = tuple(
            (c.center[0], c.center[1], c.radius) for c in cfg.obstacles
        )
        self._n_goals = len(cfg.goal_objects)
        self.reset()

    def reset(self) -> None:
        """Clear recurrent state for a fresh episode."""
        self._intent_session = (
            self._intent_model.session(self.cfg) if self._intent_model else None
        )
        self._arb_session = (
            self._arb_model.session()
            if self._arb_model is not None and hasattr(self._arb_model, "weights_")
            else None
        )

    def _estimate(self, state: WorldState, a_u: Action) -> IntentEstimate:
        if self.perfect_goal is not None:
            one_hot = tuple(
                1.0 if g == self.perfect_goal else 0.0 for g in range(self._n_goals)
            )
            return IntentEstimate(
                heatmap=np.full((GRID, GRID), 1.0 / (GRID * GRID)),
                scores=one_hot,
                windowed=one_hot,
                g_star=self.perfect_goal,
                confidence=1.0,
            )
        return self._intent_session.step(intent_features(state, a_u))

    def _alpha(self, state: WorldState, a_u: Action, a_r: Action, est: IntentEstimate) -> AlphaValue:
        if self.force_alpha is not None:
            return AlphaValue(self.force_alpha)
        if self.mode is Mode.DIRECT:
            return AlphaValue(0.0)
        if self.mode is Mode.SHARED_BASELINE:
            return timid_alpha(est.confidence, self.timid)
        feats = arb_features(
            state.gripper_pos, a_u, a_r, est.windowed, est.confidence,
            state.grabbed is not None,
        )
        return self._arb_session.step(feats)

    def decide(self, state: WorldState, a_u: Action) -> Decision:
        est = self._estimate(state, a_u)
        a_r = self.motion.act(state, est.g_star, self.cfg, self._obstacles)
        alpha = self._alpha(state, a_u, a_r, est)
        if self.mode is Mode.DIRECT and self.force_alpha is None:
            a_s = a_u
        elif self.blend == "linear":
            a_s = blend_linear(a_u, a_r, alpha.alpha, self.cfg.v_max)
        else:
            a_s = blend_rotational(a_u, a_r, alpha.alpha)
        return Decision(a_u=a_u, a_r=a_r, a_s=a_s, alpha=alpha, estimate=est)
