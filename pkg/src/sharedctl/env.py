"""Deterministic 2D pick-and-place world.

A free-flying point gripper moves inside the unit square under velocity
commands. Square goal objects sit in the workspace; the episode is a
pick-and-place: reach an object, grab it by proximity, carry it to the
place target. All operations are pure functions of their inputs.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, InvalidActionError

# Signed distance reported when there are no obstacles. Larger than any
# possible in-workspace distance (diagonal is sqrt(2)).
EMPTY_SDF = 1e6


class Phase(str, enum.Enum):
    REACH = "reach"
    CARRY = "carry"
    DONE = "done"


class Role(str, enum.Enum):
    USER = "user"
    ROBOT = "robot"
    SHARED = "shared"
    HINDSIGHT = "hindsight"


@dataclass(frozen=True)
class Action:
    """2D velocity command tagged with who produced it."""

    v: tuple[float, float]
    role: Role = Role.USER

    def magnitude(self) -> float:
        return math.hypot(self.v[0], self.v[1])


@dataclass(frozen=True)
class SquareObject:
    center: tuple[float, float]
    half_extent: float = 0.03


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class PlaceTarget:
    center: tuple[float, float]
    radius: float = 0.05


@dataclass(frozen=True)
class RandomObstacleSpec:
    """Request for obstacles drawn at reset time inside the mid band."""

    count: int
    radius: float = 0.06


def default_goal_objects() -> tuple[SquareObject, ...]:
    return tuple(SquareObject((x, 0.75)) for x in (0.2, 0.4, 0.6, 0.8))


@dataclass(frozen=True)
class WorldConfig:
    workspace_min: tuple[float, float] = (0.0, 0.0)
    workspace_max: tuple[float, float] = (1.0, 1.0)
    goal_objects: tuple[SquareObject, ...] = field(default_factory=default_goal_objects)
    place_target: PlaceTarget = PlaceTarget((0.5, 0.1))
    obstacles: tuple[Circle, ...] = ()
    random_obstacles: RandomObstacleSpec | None = None
    gripper_start: tuple[float, float] = (0.5, 0.2)
    dt: float = 0.05
    v_max: float = 0.4
    grab_radius: float = 0.05
    max_steps: int = 600

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.v_max <= 0:
            raise ConfigurationError(f"v_max must be positive, got {self.v_max}")
        if len(self.goal_objects) < 1:
            raise ConfigurationError("at least one goal object required")
        lo, hi = self.workspace_min, self.workspace_max
        if not (lo[0] < hi[0] and lo[1] < hi[1]):
            raise ConfigurationError("workspace bounds are degenerate")

        def inside(p, margin=0.0):
            return (lo[0] + margin <= p[0] <= hi[0] - margin
                    and lo[1] + margin <= p[1] <= hi[1] - margin)

        for i, obj in enumerate(self.goal_objects):
            if not inside(obj.center, obj.half_extent):
                raise ConfigurationError(f"goal object {i} outside workspace")
        if not inside(self.place_target.center):
            raise ConfigurationError("place target outside workspace")
        for i, obs in enumerate(self.obstacles):
            if not inside(obs.center):
                raise ConfigurationError(f"obstacle {i} center outside workspace")
        if not inside(self.gripper_start):
            raise ConfigurationError("gripper start outside workspace")


@dataclass(frozen=True)
class WorldState:
    t: int
    gripper_pos: tuple[float, float]
    gripper_vel: tuple[float, float]
    grabbed: int | None
    phase: Phase
    object_positions: tuple[tuple[float, float], ...]


def clip_speed(v: tuple[float, float], v_max: float) -> tuple[float, float]:
    """Scale v down so its magnitude does not exceed v_max."""
    speed = math.hypot(v[0], v[1])
    if speed <= v_max or speed == 0.0:
        return (float(v[0]), float(v[1]))
    scale = v_max / speed
    return (v[0] * scale, v[1] * scale)


def _clamp(p, lo, hi):
    return (min(max(p[0], lo[0]), hi[0]), min(max(p[1], lo[1]), hi[1]))


def step(state: WorldState, action: Action, cfg: WorldConfig) -> WorldState:
    """Advance the world one tick of cfg.dt under the given velocity.

    Velocity is clipped to cfg.v_max, position clamped to the workspace.
    In Reach, arriving within grab_radius of the nearest object grabs it;
    in Carry, arriving within the place radius finishes the episode. The
    grabbed object tracks the gripper.
    """
    if state.phase is Phase.DONE:
        raise InvalidActionError("cannot step a finished episode")
    vx, vy = action.v
    if not (math.isfinite(vx) and math.isfinite(vy)):
        raise InvalidActionError(f"non-finite action components {action.v!r}")

    v = clip_speed(action.v, cfg.v_max)
    pos = (state.gripper_pos[0] + v[0] * cfg.dt, state.gripper_pos[1] + v[1] * cfg.dt)
    pos = _clamp(pos, cfg.workspace_min, cfg.workspace_max)

    grabbed = state.grabbed
    phase = state.phase
    objects = list(state.object_positions)

    if phase is Phase.REACH:
        dists = [math.hypot(pos[0] - o[0], pos[1] - o[1]) for o in objects]
        nearest = min(range(len(objects)), key=dists.__getitem__)
        if dists[nearest] <= cfg.grab_radius:
            grabbed = nearest
            phase = Phase.CARRY
    elif phase is Phase.CARRY:
        pc = cfg.place_target.center
        if math.hypot(pos[0] - pc[0], pos[1] - pc[1]) <= cfg.place_target.radius:
            phase = Phase.DONE

    if grabbed is not None:
        objects[grabbed] = pos

    return WorldState(
        t=state.t + 1,
        gripper_pos=pos,
        gripper_vel=v,
        grabbed=grabbed,
        phase=phase,
        object_positions=tuple(objects),
    )


def reset(cfg: WorldConfig, seed: int) -> tuple[WorldState, WorldConfig]:
    """Start a fresh episode; returns the initial state and the resolved config.

    When cfg.random_obstacles is set, obstacle centers are drawn from the
    seeded RNG inside the mid band y in [0.35, 0.6], rejecting overlaps with
    goal objects, the place target, the gripper start, and earlier obstacles.
    The returned config has the drawn obstacles materialized so an episode
    is fully described by (config, seed).
    """
    resolved = cfg
    if cfg.random_obstacles is not None and cfg.random_obstacles.count > 0:
        rng = np.random.default_rng(seed)
        spec = cfg.random_obstacles
        lo, hi = cfg.workspace_min, cfg.workspace_max
        placed: list[Circle] = list(cfg.obstacles)
        clearance = 0.01
        for _ in range(spec.count):
            for attempt in range(1000):
                cx = float(rng.uniform(lo[0] + spec.radius, hi[0] - spec.radius))
                cy = float(rng.uniform(0.35, 0.6))
                ok = all(
                    math.hypot(cx - o.center[0], cy - o.center[1])
                    >= spec.radius + o.half_extent + clearance
                    for o in cfg.goal_objects
                )
                pt = cfg.place_target
                ok = ok and math.hypot(cx - pt.center[0], cy - pt.center[1]) >= (
                    spec.radius + pt.radius + clearance
                )
                gs = cfg.gripper_start
                ok = ok and math.hypot(cx - gs[0], cy - gs[1]) >= spec.radius + cfg.grab_radius
                ok = ok and all(
                    math.hypot(cx - c.center[0], cy - c.center[1])
                    >= spec.radius + c.radius + clearance
                    for c in placed
                )
                if ok:
                    placed.append(Circle((cx, cy), spec.radius))
                    break
            else:
                raise ConfigurationError(
                    "could not place random obstacles after 1000 rejection samples"
                )
        resolved = replace(cfg, obstacles=tuple(placed), random_obstacles=None)

    state = WorldState(
        t=0,
        gripper_pos=resolved.gripper_start,
        gripper_vel=(0.0, 0.0),
        grabbed=None,
        phase=Phase.REACH,
        object_positions=tuple(o.center for o in resolved.goal_objects),
    )
    return state, resolved


def signed_distance(p: tuple[float, float], obstacles) -> float:
    """Signed distance from p to the nearest obstacle circle boundary.

    Negative inside an obstacle. Returns a large sentinel when there are
    no obstacles.
    """
    if not (math.isfinite(p[0]) and math.isfinite(p[1])):
        raise InvalidActionError(f"non-finite query point {p!r}")
    if len(obstacles) == 0:
        return EMPTY_SDF
    return min(
        math.hypot(p[0] - c.center[0], p[1] - c.center[1]) - c.radius for c in obstacles
    )


def is_success(state: WorldState) -> bool:
    return state.phase is Phase.DONE


# --- config (de)serialization -------------------------------------------

def config_to_dict(cfg: WorldConfig) -> dict:
    d = {
        "workspace_min": list(cfg.workspace_min),
        "workspace_max": list(cfg.workspace_max),
        "goal_objects": [
            {"center": list(o.center), "half_extent": o.half_extent}
            for o in cfg.goal_objects
        ],
        "place_target": {
            "center": list(cfg.place_target.center),
            "radius": cfg.place_target.radius,
        },
        "obstacles": [
            {"center": list(c.center), "radius": c.radius} for c in cfg.obstacles
        ],
        "gripper_start": list(cfg.gripper_start),
        "dt": cfg.dt,
        "v_max": cfg.v_max,
        "grab_radius": cfg.grab_radius,
        "max_steps": cfg.max_steps,
    }
    if cfg.random_obstacles is not None:
        d["random_obstacles"] = {
            "count": cfg.random_obstacles.count,
            "radius": cfg.random_obstacles.radius,
        }
    return d


def config_from_dict(d: dict) -> WorldConfig:
    rand = d.get("random_obstacles")
    return WorldConfig(
        workspace_min=tuple(d.get("workspace_min", (0.0, 0.0))),
        workspace_max=tuple(d.get("workspace_max", (1.0, 1.0))),
        goal_objects=tuple(
            SquareObject(tuple(o["center"]), o.get("half_extent", 0.03))
            for o in d.get("goal_objects", [])
        ) or default_goal_objects(),
        place_target=PlaceTarget(
            tuple(d.get("place_target", {}).get("center", (0.5, 0.1))),
            d.get("place_target", {}).get("radius", 0.05),
        ),
        obstacles=tuple(
            Circle(tuple(c["center"]), c["radius"]) for c in d.get("obstacles", [])
        ),
        random_obstacles=(
            RandomObstacleSpec(rand["count"], rand.get("radius", 0.06)) if rand else None
        ),
        gripper_start=tuple(d.get("gripper_start", (0.5, 0.2))),
        dt=d.get("dt", 0.05),
        v_max=d.get("v_max", 0.4),
        grab_radius=d.get("grab_radius", 0.05),
        max_steps=d.get("max_steps", 600),
    )


def save_config(cfg: WorldConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(config_to_dict(cfg), f, indent=2)
        f.write("\n")


def load_config(path) -> WorldConfig:
    with open(path) as f:
        return config_from_dict(json.load(f))


def config_hash(cfg: WorldConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
