"""Real-time shared-control teleoperation over WebSocket.

Logical time drives the physics: each tick advances the world by exactly
cfg.dt no matter how much wall time passed, so a session is reproducible
from its recorded command stream. The tick loop is the sole mutator of
session state; the socket reader only enqueues parsed messages. Every
connection gets an independent world.

Finished episodes (including aborted ones) are written in the standard
episode format, so the relabeling pipeline and headless replay consume
live recordings unchanged.

Wire protocol, version 1. Client sends:
    {"type": "hello", "version": 1}
    {"type": "user_cmd", "seq": <int>, "v": [vx, vy]}
    {"type": "set_mode", "mode": "direct" | "shared_baseline" | "shared_learned"}
    {"type": "reset"}
Server sends:
    {"type": "config", ...world layout, mode, protocol version...}
    {"type": "state", "t", "gripper", "grabbed", "alpha", "conf",
     "g_star", "done", ["heatmap"]}
    {"type": "episode_end", "timesteps": <int>, "success": <bool>}
    {"type": "error", "reason": <str>}
"""

from __future__ import annotations

import asyncio
import json
import math
from pathlib import Path

from .arbitration import ArbitrationEstimator, TimidParams
from .env import Action, Role, WorldConfig, clip_speed, is_success, reset, step
from .episodes import Episode, Mode, Outcome, StepRecord, write_episodes
from .intent import GRID, IntentEstimator
from .motion import MotionPolicy
from .pipeline import SharedController

PROTOCOL_VERSION = 1

# How long (logical seconds) a user command keeps applying before the
# input is considered released and a_u falls back to zero.
CMD_LIFETIME = 0.25

MESSAGE_TYPES = ("hello", "user_cmd", "set_mode", "reset")


def _error(reason: str) -> dict:
    return {"type": "error", "reason": reason}


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_vec2(v) -> bool:
    return isinstance(v, (list, tuple)) and len(v) == 2 and all(_is_num(x) for x in v)


_MODES = tuple(m.value for m in Mode)


def check_client_message(msg) -> str | None:
    """Schema check for a parsed client message; returns a reason or None.

    Unknown extra fields are ignored on both sides of the protocol.
    """
    if not isinstance(msg, dict) or "type" not in msg:
        return "message must be an object with a 'type' field"
    kind = msg["type"]
    if kind == "hello":
        if msg.get("version") != PROTOCOL_VERSION:
            return f"unsupported protocol version {msg.get('version')!r}"
        return None
    if kind == "user_cmd":
        if not _is_int(msg.get("seq")):
            return "user_cmd needs an integer 'seq'"
        if not _is_vec2(msg.get("v")):
            return "user_cmd needs 'v' as two finite numbers"
        return None
    if kind == "set_mode":
        if msg.get("mode") not in _MODES:
            return f"unknown mode {msg.get('mode')!r}"
        return None
    if kind == "reset":
        return None
    return f"unknown message type {kind!r}"


def check_server_message(msg) -> str | None:
    """Schema check for a server message; returns a reason or None."""
    if not isinstance(msg, dict) or "type" not in msg:
        return "message must be an object with a 'type' field"
    kind = msg["type"]
    if kind == "config":
        if msg.get("protocol") != PROTOCOL_VERSION:
            return "config: bad protocol version"
        if msg.get("mode") not in _MODES or msg.get("pending_mode") not in _MODES:
            return "config: bad mode"
        ws = msg.get("workspace")
        if not (isinstance(ws, list) and len(ws) == 2 and all(_is_vec2(c) for c in ws)):
            return "config: workspace must be [[xmin,ymin],[xmax,ymax]]"
        objs = msg.get("objects")
        if not (isinstance(objs, list) and objs and all(_is_vec2(o) for o in objs)):
            return "config: objects must be a nonempty list of [x,y]"
        if not _is_vec2(msg.get("place_target")) or not _is_vec2(msg.get("gripper_start")):
            return "config: place_target and gripper_start must be [x,y]"
        obstacles = msg.get("obstacles")
        if not (isinstance(obstacles, list) and all(
            isinstance(o, list) and len(o) == 3 and all(_is_num(x) for x in o)
            for o in obstacles
        )):
            return "config: obstacles must be a list of [cx,cy,r]"
        for key in ("object_half_extent", "place_radius", "dt", "v_max", "grab_radius"):
            if not _is_num(msg.get(key)) or msg[key] <= 0:
                return f"config: {key} must be a positive number"
        for key in ("max_steps", "grid", "heatmap_every"):
            if not _is_int(msg.get(key)) or msg[key] < 1:
                return f"config: {key} must be a positive integer"
        return None
    if kind == "state":
        if not _is_int(msg.get("t")) or msg["t"] < 0:
            return "state: t must be a non-negative integer"
        if not _is_vec2(msg.get("gripper")):
            return "state: gripper must be [x,y]"
        if msg.get("grabbed") is not None and not _is_int(msg["grabbed"]):
            return "state: grabbed must be an object id or null"
        if not _is_num(msg.get("alpha")) or not 0.0 <= msg["alpha"] <= 1.0:
            return "state: alpha must be a number in [0, 1]"
        if msg.get("conf") is not None and (
            not _is_num(msg["conf"]) or not 0.0 <= msg["conf"] <= 1.0
        ):
            return "state: conf must be null or a number in [0, 1]"
        if msg.get("g_star") is not None and not _is_int(msg["g_star"]):
            return "state: g_star must be a goal id or null"
        if not isinstance(msg.get("done"), bool):
            return "state: done must be a boolean"
        if "heatmap" in msg:
            hm = msg["heatmap"]
            if not (isinstance(hm, list) and len(hm) == GRID * GRID
                    and all(_is_num(x) for x in hm)):
                return f"state: heatmap must be {GRID * GRID} finite numbers"
        return None
    if kind == "episode_end":
        if not _is_int(msg.get("timesteps")) or msg["timesteps"] < 0:
            return "episode_end: timesteps must be a non-negative integer"
        if not isinstance(msg.get("success"), bool):
            return "episode_end: success must be a boolean"
        return None
    if kind == "error":
        if not isinstance(msg.get("reason"), str) or not msg["reason"]:
            return "error: reason must be a nonempty string"
        return None
    return f"unknown message type {kind!r}"


class TeleopSession:
    """One client's world, controller, and episode recorder.

    `handle_message` stages inputs and returns immediate replies;
    `tick` applies staged inputs and advances the world one step.
    Both must be called from a single task.
    """

    def __init__(
        self,
        cfg: WorldConfig,
        intent: IntentEstimator,
        motion: MotionPolicy,
        arbitration: ArbitrationEstimator | None = None,
        mode: Mode | None = None,
        heatmap_every: int = 5,
        timid: TimidParams = TimidParams(),
        blend: str = "rotational",
        seed: int = 0,
        session_id: int = 0,
        record_dir=None,
    ):
        if heatmap_every < 1:
            raise ValueError(f"heatmap_every must be >= 1, got {heatmap_every}")
        self._base_cfg = cfg
        self._intent = intent
        self._motion = motion
        self._arbitration = arbitration
        self._heatmap_every = heatmap_every
        self._timid = timid
        self._blend = blend
        self._seed = seed
        self.session_id = session_id
        self._record_dir = Path(record_dir) if record_dir is not None else None

        default = Mode.SHARED_LEARNED if arbitration is not None else Mode.SHARED_BASELINE
        self.mode = mode or default
        self._pending_mode = self.mode

        self.recorded_files: list[Path] = []
        self._episode_index = 0
        self._cmd: tuple[int, tuple[float, float]] | None = None  # (tick, v)
        self._tick_count = 0
        self._reset_requested = False
        self.episode_active = False
        self._start_episode()

    # -- inbound ---------------------------------------------------------

    def handle_message(self, msg) -> list[dict]:
        """Stage one client message; returns immediate replies."""
        reason = check_client_message(msg)
        if reason is not None:
            return [_error(reason)]
        kind = msg["type"]
        if kind == "hello":
            return [self.config_message()]
        if kind == "user_cmd":
            seq, v = msg["seq"], msg["v"]
            if self._cmd is None or seq > self._cmd[0]:
                self._cmd = (seq, (float(v[0]), float(v[1])))
                self._cmd_tick = self._tick_count
            return []
        if kind == "set_mode":
            requested = Mode(msg["mode"])
            if requested is Mode.SHARED_LEARNED and self._arbitration is None:
                return [_error("no arbitration model loaded")]
            self._pending_mode = requested
            return [self.config_message()]
        # reset: applied at the top of the next tick.
        self._reset_requested = True
        return []

    # -- outbound --------------------------------------------------------

    def config_message(self) -> dict:
        cfg = self.cfg
        return {
            "type": "config",
            "protocol": PROTOCOL_VERSION,
            "mode": self.mode.value,
            "pending_mode": self._pending_mode.value,
            "workspace": [list(cfg.workspace_min), list(cfg.workspace_max)],
            "objects": [list(o.center) for o in cfg.goal_objects],
            "object_half_extent": cfg.goal_objects[0].half_extent,
            "place_target": list(cfg.place_target.center),
            "place_radius": cfg.place_target.radius,
            "obstacles": [[*o.center, o.radius] for o in cfg.obstacles],
            "gripper_start": list(cfg.gripper_start),
            "dt": cfg.dt,
            "v_max": cfg.v_max,
            "grab_radius": cfg.grab_radius,
            "max_steps": cfg.max_steps,
            "grid": GRID,
            "heatmap_every": self._heatmap_every,
        }

    def _state_message(self, alpha: float, conf, g_star, done: bool, heatmap=None) -> dict:
        msg = {
            "type": "state",
            "t": self.state.t,
            "gripper": list(self.state.gripper_pos),
            "grabbed": self.state.grabbed,
            "alpha": alpha,
            "conf": conf,
            "g_star": g_star,
            "done": done,
        }
        if heatmap is not None:
            msg["heatmap"] = [float(x) for x in heatmap.ravel()]
        return msg

    # -- episode lifecycle -------------------------------------------------

    def _start_episode(self) -> None:
        self.mode = self._pending_mode
        self.state, self.cfg = reset(self._base_cfg, self._seed + self._episode_index)
        self._controller = SharedController(
            self.cfg, self.mode, self._intent, self._motion,
            arbitration=self._arbitration, timid=self._timid, blend=self._blend,
        )
        self._records: list[StepRecord] = []
        self._true_goal: int | None = None
        self._cmd = None
        self.episode_active = True

    def _finish_episode(self, outcome: Outcome) -> Episode:
        episode = Episode(
            config=self.cfg,
            seed=self._seed + self._episode_index,
            mode=self.mode,
            true_goal=self._true_goal,
            outcome=outcome,
            steps=tuple(self._records),
        )
        self.episode_active = False
        self._episode_index += 1
        if self._record_dir is not None and episode.steps:
            self._record_dir.mkdir(parents=True, exist_ok=True)
            path = self._record_dir / (
                f"session{self.session_id:03d}_episode{episode.seed - self._seed:03d}.jsonl"
            )
            write_episodes(path, [episode])
            self.recorded_files.append(path)
        return episode

    def abort(self) -> None:
        """Record the in-flight episode as aborted (disconnect, shutdown)."""
        if self.episode_active:
            self._finish_episode(Outcome.ABORTED)

    # -- tick --------------------------------------------------------------

    def _current_command(self) -> Action:
        if self._cmd is None:
            return Action((0.0, 0.0), Role.USER)
        age = (self._tick_count - self._cmd_tick) * self.cfg.dt
        if age > CMD_LIFETIME:
            return Action((0.0, 0.0), Role.USER)
        return Action(clip_speed(self._cmd[1], self.cfg.v_max), Role.USER)

    def tick(self) -> list[dict]:
        """Advance logical time by one dt; returns outbound messages."""
        out: list[dict] = []
        if self._reset_requested:
            self._reset_requested = False
            if self.episode_active and self._records:
                self._finish_episode(Outcome.ABORTED)
            self._start_episode()
            out.append(self._state_message(alpha=0.0, conf=None, g_star=None, done=False))
            return out
        if not self.episode_active:
            return out
        self._tick_count += 1
        a_u = self._current_command()
        try:
            decision = self._controller.decide(self.state, a_u)
        except Exception as e:
            self._finish_episode(Outcome.ABORTED)
            out.append(_error(f"model failure, episode aborted: {e}"))
            out.append(self._episode_end_message(success=False))
            return out
        self._records.append(StepRecord(
            t=self.state.t,
            state=self.state,
            a_u=a_u,
            a_s=decision.a_s,
            alpha=decision.alpha.alpha,
            a_r=decision.a_r,
            scores=tuple(decision.estimate.windowed),
            g_star=decision.estimate.g_star,
            confidence=decision.estimate.confidence,
        ))
        self.state = step(self.state, decision.a_s, self.cfg)
        if self._true_goal is None and self.state.grabbed is not None:
            self._true_goal = self.state.grabbed
        done = is_success(self.state) or self.state.t >= self.cfg.max_steps
        heatmap = (
            decision.estimate.heatmap
            if self.state.t % self._heatmap_every == 0
            else None
        )
        out.append(self._state_message(
            alpha=decision.alpha.alpha,
            conf=decision.estimate.confidence,
            g_star=decision.estimate.g_star,
            done=done,
            heatmap=heatmap,
        ))
        if done:
            n_steps = len(self._records)
            self._finish_episode(
                Outcome.SUCCESS if is_success(self.state) else Outcome.TIMEOUT
            )
            out.append(self._episode_end_message(
                success=is_success(self.state), timesteps=n_steps
            ))
        return out

    def _episode_end_message(self, success: bool, timesteps: int | None = None) -> dict:
        return {
            "type": "episode_end",
            "timesteps": timesteps if timesteps is not None else len(self._records),
            "success": success,
        }


async def _run_session(websocket, session: TeleopSession, tick_interval: float) -> None:
    queue: asyncio.Queue = asyncio.Queue()

    async def reader():
        async for raw in websocket:
            try:
                msg = json.loads(raw)
            except (json.JSONDecodeError, UnicodeDecodeError):
                await websocket.send(json.dumps(_error("invalid JSON")))
                continue
            queue.put_nowait(msg)

    reader_task = asyncio.create_task(reader())
    try:
        while not reader_task.done():
            replies: list[dict] = []
            while not queue.empty():
                replies.extend(session.handle_message(queue.get_nowait()))
            replies.extend(session.tick())
            for msg in replies:
                await websocket.send(json.dumps(msg))
            await asyncio.sleep(tick_interval)
    finally:
        reader_task.cancel()
        await asyncio.gather(reader_task, return_exceptions=True)
        session.abort()


async def serve_forever(
    cfg: WorldConfig,
    intent: IntentEstimator,
    motion: MotionPolicy,
    arbitration: ArbitrationEstimator | None = None,
    host: str = "127.0.0.1",
    port: int = 8765,
    record_dir=None,
    heatmap_every: int = 5,
    timid: TimidParams = TimidParams(),
    blend: str = "rotational",
    seed: int = 0,
    tick_interval: float | None = None,
    ready: asyncio.Event | None = None,
) -> None:
    """Accept teleoperation sessions until cancelled.

    tick_interval is the wall-clock pacing only; each tick advances
    logical time by exactly cfg.dt regardless. `ready` is set once the
    listener is accepting connections (used by tests).
    """
    from websockets.asyncio.server import serve

    interval = cfg.dt if tick_interval is None else tick_interval
    counter = 0

    async def handler(websocket):
        nonlocal counter
        counter += 1
        session = TeleopSession(
            cfg, intent, motion, arbitration,
            heatmap_every=heatmap_every, timid=timid, blend=blend,
            seed=seed + 1000 * counter, session_id=counter,
            record_dir=record_dir,
        )
        await _run_session(websocket, session, interval)

    async with serve(handler, host, port):
        if ready is not None:
            ready.set()
        await asyncio.Future()
