"""Gauss-Newton trajectory optimizer and demonstration dataset generation.

Trajectories minimize a sum-of-squares cost: squared second differences
(smoothness), a hinge on the signed distance to obstacles (clearance),
and a soft terminal term pulling the last waypoint onto the goal. The
first waypoint is pinned to the start. Levenberg damping makes accepted
steps monotone in cost: damping is multiplied by 10 after a rejected
step and divided by 10 after an accepted one.

The optimizer doubles as the supervision oracle for motion cloning:
`generate_demo_dataset` streams (state features, velocity) records to
JSONL, one trajectory pair (reach segment, place segment) per problem.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .env import Circle, WorldConfig, clip_speed, config_to_dict, reset, signed_distance
from .errors import ConfigurationError, OptimizationError
from .fileio import atomic_write_text


class Segment(str, Enum):
    TO_OBJECT = "to_object"
    TO_PLACE = "to_place"


@dataclass(frozen=True)
class OptParams:
    """Cost weights and Levenberg schedule for `optimize`."""

    w_smooth: float = 1.0
    w_obstacle: float = 20.0
    margin: float = 0.06
    w_goal: float = 100.0
    lambda0: float = 1e-3
    max_iters: int = 100
    tol: float = 1e-8
    n_waypoints: int = 40

    def __post_init__(self):
        if min(self.w_smooth, self.w_obstacle, self.w_goal) <= 0.0:
            raise ConfigurationError("cost weights must be positive")
        if self.margin < 0.0:
            raise ConfigurationError("margin must be nonnegative")
        if self.lambda0 <= 0.0 or self.tol <= 0.0 or self.max_iters < 1:
            raise ConfigurationError("bad optimizer schedule")
        if self.n_waypoints < 3:
            raise ConfigurationError("need at least 3 waypoints")


@dataclass
class Trajectory:
    """Waypoint sequence at fixed dt; `converged` false means the
    optimizer hit its iteration cap while still improving."""

    waypoints: np.ndarray
    dt: float
    segment: Segment
    converged: bool = True
    cost_trace: tuple[float, ...] = ()

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64)
        if self.waypoints.ndim != 2 or self.waypoints.shape[1] != 2:
            raise ConfigurationError(f"waypoints must be (T, 2), got {self.waypoints.shape}")
        if self.waypoints.shape[0] < 2:
            raise ConfigurationError("a trajectory needs at least 2 waypoints")
        if not np.all(np.isfinite(self.waypoints)):
            raise ConfigurationError("non-finite waypoint")
        if self.dt <= 0.0:
            raise ConfigurationError("dt must be positive")


def trajectory_cost(points: np.ndarray, goal, obstacles, params: OptParams) -> float:
    """Full cost of a (T, 2) waypoint array (start included)."""
    second = points[2:] - 2.0 * points[1:-1] + points[:-2]
    cost = params.w_smooth * float((second * second).sum())
    if obstacles:
        for p in points:
            gap = params.margin - signed_distance((p[0], p[1]), obstacles)
            if gap > 0.0:
                cost += params.w_obstacle * gap * gap
    terminal = points[-1] - np.asarray(goal)
    cost += params.w_goal * float(terminal @ terminal)
    return cost


def _residuals(points: np.ndarray, goal, obstacles, params: OptParams):
    """Residual vector and Jacobian w.r.t. the free points (all but the
    first). Rows: smoothness (2 per interior point), obstacle hinge
    (1 per free point), terminal (2)."""
    T = points.shape[0]
    n_free = 2 * (T - 1)
    rows = 2 * (T - 2) + (T - 1) + 2
    r = np.zeros(rows)
    J = np.zeros((rows, n_free))
    sw = math.sqrt(params.w_smooth)
    row = 0
    for t in range(1, T - 1):
        diff = points[t + 1] - 2.0 * points[t] + points[t - 1]
        for axis in range(2):
            r[row] = sw * diff[axis]
            if t - 1 >= 1:
                J[row, 2 * (t - 2) + axis] = sw
            J[row, 2 * (t - 1) + axis] = -2.0 * sw
            J[row, 2 * t + axis] = sw
            row += 1
    so = math.sqrt(params.w_obstacle)
    for t in range(1, T):
        if not obstacles:
            row += 1
            continue
        p = points[t]
        dists = [math.hypot(p[0] - c.center[0], p[1] - c.center[1]) - c.radius for c in obstacles]
        nearest = int(np.argmin(dists))
        gap = params.margin - dists[nearest]
        if gap > 0.0:
            r[row] = so * gap
            c = obstacles[nearest]
            norm = dists[nearest] + c.radius
            if norm > 1e-12:
                grad = (np.asarray(p) - np.asarray(c.center)) / norm
                J[row, 2 * (t - 1) : 2 * t] = -so * grad
        row += 1
    sg = math.sqrt(params.w_goal)
    terminal = points[-1] - np.asarray(goal)
    r[row : row + 2] = sg * terminal
    J[row, 2 * (T - 2)] = sg
    J[row + 1, 2 * (T - 2) + 1] = sg
    return r, J


def cost_gradient(points: np.ndarray, goal, obstacles, params: OptParams) -> np.ndarray:
    """Gradient of trajectory_cost w.r.t. free points, shape (T-1, 2)."""
    r, J = _residuals(points, goal, obstacles, params)
    return (2.0 * J.T @ r).reshape(-1, 2)


def gn_step(points: np.ndarray, goal, obstacles, params: OptParams, lam: float) -> np.ndarray:
    """Damped Gauss-Newton step for the free points, shape (T-1, 2)."""
    r, J = _residuals(points, goal, obstacles, params)
    A = J.T @ J + lam * np.eye(J.shape[1])
    g = J.T @ r
    try:
        delta = np.linalg.solve(A, -g)
    except np.linalg.LinAlgError as exc:
        raise OptimizationError(f"normal equations unsolvable: {exc}") from exc
    if not np.all(np.isfinite(delta)):
        raise OptimizationError("non-finite step from linear solve")
    return delta.reshape(-1, 2)


def _initial_path(start: np.ndarray, goal: np.ndarray, T: int, with_bump: bool) -> np.ndarray:
    s = np.linspace(0.0, 1.0, T)[:, None]
    points = start + s * (goal - start)
    chord = goal - start
    length = float(np.hypot(*chord))
    if with_bump and length > 1e-12:
        # tiny perpendicular bow so an obstacle sitting exactly on the
        # chord does not leave the optimizer stuck on a symmetry ridge
        perp = np.array([-chord[1], chord[0]]) / length
        bump = min(0.01, length / 20.0) * np.sin(np.pi * s)
        points = points + bump * perp
    return np.clip(points, 0.0, 1.0)


def optimize(
    start,
    goal,
    obstacles=(),
    params: OptParams = OptParams(),
    dt: float = 0.05,
    segment: Segment = Segment.TO_OBJECT,
) -> Trajectory:
    """Locally optimal path from start to goal around circular obstacles."""
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    obstacles = tuple(obstacles)
    points = _initial_path(start, goal, params.n_waypoints, with_bump=bool(obstacles))
    cost = trajectory_cost(points, goal, obstacles, params)
    trace = [cost]
    lam = params.lambda0
    converged = False
    for _ in range(params.max_iters):
        accepted = False
        while lam <= 1e12:
            delta = gn_step(points, goal, obstacles, params, lam)
            candidate = points.copy()
            candidate[1:] += delta
            new_cost = trajectory_cost(candidate, goal, obstacles, params)
            if new_cost < cost:
                points, improvement, cost = candidate, cost - new_cost, new_cost
                trace.append(cost)
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True
            break
        # a small decrease only counts as converged once damping has
        # decayed: heavily damped steps are short no matter how far the
        # minimum still is
        if improvement < params.tol and lam <= 1e-6:
            converged = True
            break
    return Trajectory(points, dt, segment, converged, tuple(trace))


def pick_place_plan(
    start, obj, place, obstacles=(), params: OptParams = OptParams(), dt: float = 0.05
) -> tuple[Trajectory, Trajectory]:
    """Reach segment (start to object) plus place segment (object to place)."""
    reach = optimize(start, obj, obstacles, params, dt, Segment.TO_OBJECT)
    carry = optimize(obj, place, obstacles, params, dt, Segment.TO_PLACE)
    return reach, carry


def label_velocities(traj: Trajectory, v_max: float = 0.4):
    """Per-step (position, velocity) supervision pairs from waypoints."""
    pairs = []
    for t in range(traj.waypoints.shape[0] - 1):
        p = traj.waypoints[t]
        v = (traj.waypoints[t + 1] - p) / traj.dt
        pairs.append(((float(p[0]), float(p[1])), clip_speed((float(v[0]), float(v[1])), v_max)))
    return pairs


# ---------------------------------------------------------------------------
# Demonstration dataset (JSONL: header record, then one record per step).
# ---------------------------------------------------------------------------


def _segment_waypoint_count(length: float, dt: float, v_ref: float) -> int:
    return int(np.clip(round(length / (v_ref * dt)) + 1, 8, 80))


def generate_demo_dataset(
    path,
    cfg: WorldConfig | None = None,
    n_trajectories: int = 300,
    seed: int = 0,
    params: OptParams | None = None,
    v_ref: float = 0.3,
) -> dict:
    """Sample pick-and-place problems, optimize, and stream velocity labels.

    Starts are drawn uniformly over the workspace interior and the goal
    object uniformly over the configured objects. Waypoint counts adapt
    to path length so labeled speeds sit near v_ref; a fixed count would
    make speed depend on problem geometry, which a state-feedback policy
    cannot represent. Problems whose optimization fails to converge are
    resampled. Returns a summary dict (also usable as the header echo).
    """
    cfg = cfg if cfg is not None else WorldConfig()
    params = params if params is not None else OptParams()
    rng = np.random.default_rng(seed)
    header = {
        "kind": "demo_dataset",
        "version": 1,
        "seed": seed,
        "n_trajectories": n_trajectories,
        "v_ref": v_ref,
        "config": config_to_dict(cfg),
        "opt_params": asdict(params),
    }
    lines = [json.dumps(header, sort_keys=True)]
    n_steps = 0
    produced = 0
    attempts = 0
    while produced < n_trajectories:
        if attempts >= 20 * n_trajectories:
            raise OptimizationError(
                f"gave up after {attempts} attempts ({produced} trajectories optimized)"
            )
        attempts += 1
        start = rng.uniform(0.05, 0.95, size=2)
        goal_id = int(rng.integers(len(cfg.goal_objects)))
        obstacle_seed = int(rng.integers(2**63))
        if cfg.random_obstacles is not None and cfg.random_obstacles.count > 0:
            _, resolved = reset(cfg, seed=obstacle_seed)
            obstacles = resolved.obstacles
        else:
            obstacles = cfg.obstacles
        obj = cfg.goal_objects[goal_id].center
        place = cfg.place_target.center
        segs = []
        ok = True
        for a, b, seg in ((start, obj, Segment.TO_OBJECT), (obj, place, Segment.TO_PLACE)):
            length = math.hypot(b[0] - a[0], b[1] - a[1])
            T = _segment_waypoint_count(length, cfg.dt, v_ref)
            seg_params = OptParams(**{**asdict(params), "n_waypoints": T})
            traj = optimize(a, b, obstacles, seg_params, cfg.dt, seg)
            if not traj.converged:
                ok = False
                break
            segs.append(traj)
        if not ok:
            continue
        obs_list = [[c.center[0], c.center[1], c.radius] for c in obstacles]
        for traj in segs:
            grabbed = 1 if traj.segment is Segment.TO_PLACE else 0
            target = place if grabbed else obj
            for step_idx, (pos, vel) in enumerate(label_velocities(traj, cfg.v_max)):
                lines.append(
                    json.dumps(
                        {
                            "traj": produced,
                            "segment": traj.segment.value,
                            "t": step_idx,
                            "pos": list(pos),
                            "grabbed": grabbed,
                            "target": [target[0], target[1]],
                            "goal_id": goal_id,
                            "obstacles": obs_list,
                            "velocity": list(vel),
                        },
                        sort_keys=True,
                    )
                )
                n_steps += 1
        produced += 1
    atomic_write_text(path, "\n".join(lines) + "\n")
    return {**header, "n_steps": n_steps, "attempts": attempts}


def read_demo_dataset(path) -> tuple[dict, list[dict]]:
    """Load a demo JSONL file; returns (header, step records)."""
    with open(path) as fh:
        first = fh.readline()
        if not first:
            raise ConfigurationError(f"{path}: empty dataset file")
        header = json.loads(first)
        if header.get("kind") != "demo_dataset":
            raise ConfigurationError(f"{path}: not a demo dataset")
        records = [json.loads(line) for line in fh if line.strip()]
    return header, records
