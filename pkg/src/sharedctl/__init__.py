"""Shared-autonomy teleoperation workbench.

A deterministic 2D pick-and-place simulator plus the full shared-control
stack: goal-intent inference from command history, a motion policy cloned
from a Gauss-Newton trajectory optimizer, rotational policy blending, and
an arbitration network trained on hindsight-relabeled episodes aggregated
across collection rounds. Includes
scripted simulated users for headless experiments and a WebSocket service
for live human-in-the-loop sessions.
"""

from .arbitration import (
    AlphaValue,
    TimidParams,
    blend_linear,
    blend_rotational,
    hindsight_alpha,
    signed_angle,
    timid_alpha,
)
from .env import (
    Action,
    Circle,
    Phase,
    PlaceTarget,
    Role,
    SquareObject,
    WorldConfig,
    WorldState,
    is_success,
    reset,
    signed_distance,
    step,
)

__all__ = [
    "Action",
    "AlphaValue",
    "Circle",
    "Phase",
    "PlaceTarget",
    "Role",
    "SquareObject",
    "TimidParams",
    "WorldConfig",
    "WorldState",
    "blend_linear",
    "blend_rotational",
    "hindsight_alpha",
    "is_success",
    "reset",
    "signed_angle",
    "signed_distance",
    "step",
    "timid_alpha",
]

__version__ = "0.1.0"
