"""Episode records and their JSONL serialization.

An episode file is line-delimited JSON: a header record carrying the
resolved world config, seed, mode, true goal, and outcome, followed by
one record per step. Multiple episodes concatenate in one file. Floats
round-trip exactly (shortest-repr JSON encoding), so a replayed episode
can be compared bitwise against its recording.
"""

from __future__ import annotations

import enum
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .env import Action, Phase, Role, WorldConfig, WorldState, config_from_dict, config_hash, config_to_dict
from .errors import ConfigurationError


class Mode(str, enum.Enum):
    DIRECT = "direct"
    SHARED_BASELINE = "shared_baseline"
    SHARED_LEARNED = "shared_learned"


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    TIMEOUT = "timeout"
    # Live teleoperation only: episode cut short by reset, disconnect,
    # or a model failure. Batch collection never produces this.
    ABORTED = "aborted"


@dataclass(frozen=True)
class StepRecord:
    """One control tick: the pre-step state and everything decided on it.

    Model-derived fields (a_r, scores, g_star, confidence) are None when
    no models were in the loop (plain scripted-user data collection).
    """

    t: int
    state: WorldState
    a_u: Action
    a_s: Action
    alpha: float
    a_r: Action | None = None
    scores: tuple[float, ...] | None = None
    g_star: int | None = None
    confidence: float | None = None

    @property
    def grabbed(self) -> bool:
        return self.state.grabbed is not None


@dataclass(frozen=True)
class Episode:
    config: WorldConfig
    seed: int
    mode: Mode
    true_goal: int | None
    outcome: Outcome
    steps: tuple[StepRecord, ...]

    def __post_init__(self):
        if self.mode is Mode.DIRECT:
            for rec in self.steps:
                if rec.alpha != 0.0 or rec.a_s.v != rec.a_u.v:
                    raise ConfigurationError(
                        f"direct-mode step {rec.t} has alpha={rec.alpha}, a_s != a_u"
                    )

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS


def _state_to_dict(s: WorldState) -> dict:
    return {
        "t": s.t,
        "pos": list(s.gripper_pos),
        "vel": list(s.gripper_vel),
        "grabbed": s.grabbed,
        "phase": s.phase.value,
        "objects": [list(p) for p in s.object_positions],
    }


def _state_from_dict(d: dict) -> WorldState:
    return WorldState(
        t=d["t"],
        gripper_pos=tuple(d["pos"]),
        gripper_vel=tuple(d["vel"]),
        grabbed=d["grabbed"],
        phase=Phase(d["phase"]),
        object_positions=tuple(tuple(p) for p in d["objects"]),
    )


def _action_to_list(a: Action | None):
    if a is None:
        return None
    return [a.v[0], a.v[1], a.role.value]


def _action_from_list(v) -> Action | None:
    if v is None:
        return None
    return Action((v[0], v[1]), Role(v[2]))


def _step_to_dict(rec: StepRecord) -> dict:
    return {
        "t": rec.t,
        "state": _state_to_dict(rec.state),
        "a_u": _action_to_list(rec.a_u),
        "a_r": _action_to_list(rec.a_r),
        "a_s": _action_to_list(rec.a_s),
        "alpha": rec.alpha,
        "scores": list(rec.scores) if rec.scores is not None else None,
        "g_star": rec.g_star,
        "confidence": rec.confidence,
    }


def _step_from_dict(d: dict) -> StepRecord:
    return StepRecord(
        t=d["t"],
        state=_state_from_dict(d["state"]),
        a_u=_action_from_list(d["a_u"]),
        a_s=_action_from_list(d["a_s"]),
        alpha=d["alpha"],
        a_r=_action_from_list(d["a_r"]),
        scores=tuple(d["scores"]) if d.get("scores") is not None else None,
        g_star=d.get("g_star"),
        confidence=d.get("confidence"),
    )


def episode_header(ep: Episode) -> dict:
    return {
        "kind": "episode",
        "version": 1,
        "config": config_to_dict(ep.config),
        "config_hash": config_hash(ep.config),
        "seed": ep.seed,
        "mode": ep.mode.value,
        "true_goal": ep.true_goal,
        "outcome": ep.outcome.value,
        "n_steps": ep.n_steps,
    }


def episode_lines(ep: Episode):
    yield json.dumps(episode_header(ep), sort_keys=True)
    for rec in ep.steps:
        yield json.dumps(_step_to_dict(rec), sort_keys=True)


def write_episodes(path, episodes) -> None:
    """Atomically write episodes (any iterable) to one JSONL file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            for ep in episodes:
                for line in episode_lines(ep):
                    fh.write(line)
                    fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_episodes(path) -> list[Episode]:
    episodes: list[Episode] = []
    with open(path) as fh:
        lines = (json.loads(line) for line in fh if line.strip())
        for doc in lines:
            if doc.get("kind") != "episode":
                raise ConfigurationError(f"{path}: expected episode header, got {doc.get('kind')!r}")
            steps = []
            for _ in range(doc["n_steps"]):
                try:
                    steps.append(_step_from_dict(next(lines)))
                except StopIteration:
                    raise ConfigurationError(f"{path}: truncated episode") from None
            episodes.append(
                Episode(
                    config=config_from_dict(doc["config"]),
                    seed=doc["seed"],
                    mode=Mode(doc["mode"]),
                    true_goal=doc["true_goal"],
                    outcome=Outcome(doc["outcome"]),
                    steps=tuple(steps),
                )
            )
    return episodes
