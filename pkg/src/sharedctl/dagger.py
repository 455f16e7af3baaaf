"""Hindsight data aggregation for the arbitration model.

The loop: collect episodes under the current arbitration source, relabel
every step with the alpha that would have rotated the user's command onto
the motion policy's action at the operator's true goal, aggregate those
samples into a growing dataset, retrain warm-started from the previous
model, repeat. The default schedule pretrains on 100 direct-control
episodes and then runs four aggregation rounds of 30 shared-control
episodes each, so the lineage holds models trained on 100 direct plus
30/60/90/120 shared episodes.

Also home to the evaluation harness (paired-seed episode batches summarized
into a metrics table) and episode replay for determinism checks.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .arbitration import (
    ArbitrationEstimator,
    TimidParams,
    arb_features,
    hindsight_alpha,
)
from .env import WorldConfig, is_success, reset, step
from .episodes import Episode, Mode, Outcome, StepRecord, write_episodes
from .errors import ConfigurationError, LabelingError, StageError
from .fileio import atomic_write_text
from .intent import IntentEstimator
from .motion import MotionPolicy
from .pipeline import SharedController
from .sim_user import SimUser, SimUserParams


@dataclass(frozen=True)
class AlphaSample:
    """One relabeled timestep: arbitration features and the hindsight target.

    Degenerate steps (collinear commands or a vanishing vector) carry a
    placeholder target of 0 and are masked out of the training loss, but
    stay in the dataset so sequences keep their original length.
    """

    episode_id: str
    t: int
    features: tuple[float, ...]
    target: float
    degenerate: bool
    mode: str

    def __post_init__(self):
        if not 0.0 <= self.target <= 1.0:
            raise ValueError(f"target outside [0, 1]: {self.target}")


def collect_episode(
    user: SimUserParams,
    cfg: WorldConfig,
    seed: int,
    mode: Mode,
    intent: IntentEstimator | None,
    motion: MotionPolicy,
    arbitration: ArbitrationEstimator | None = None,
    timid: TimidParams = TimidParams(),
    blend: str = "rotational",
    force_alpha: float | None = None,
    perfect_goal: int | None = None,
) -> Episode:
    """Run one closed-loop episode with the full model stack in the loop.

    Even in direct mode the intent and motion models run every step, so the
    recorded a_r/scores/confidence make the episode relabelable. The
    simulated user's noise stream is seeded from the episode seed; the same
    (seed, models, mode) always yields the identical episode.
    """
    if user.v_pref > cfg.v_max:
        raise ConfigurationError(f"v_pref {user.v_pref} exceeds world v_max {cfg.v_max}")
    if user.goal_id >= len(cfg.goal_objects):
        raise ConfigurationError(f"goal id {user.goal_id} out of range")
    state, resolved = reset(cfg, seed)
    controller = SharedController(
        resolved,
        mode,
        intent,
        motion,
        arbitration,
        timid=timid,
        blend=blend,
        force_alpha=force_alpha,
        perfect_goal=perfect_goal,
    )
    sim = SimUser(user, seed)
    records = []
    while not is_success(state) and state.t < resolved.max_steps:
        a_u = sim.command(state, resolved)
        d = controller.decide(state, a_u)
        records.append(
            StepRecord(
                t=state.t,
                state=state,
                a_u=a_u,
                a_s=d.a_s,
                alpha=d.alpha.alpha,
                a_r=d.a_r,
                scores=tuple(d.estimate.windowed),
                g_star=d.estimate.g_star,
                confidence=d.estimate.confidence,
            )
        )
        state = step(state, d.a_s, resolved)
        sim.observe_executed(d.a_s)
    return Episode(
        config=resolved,
        seed=seed,
        mode=mode,
        true_goal=user.goal_id,
        outcome=Outcome.SUCCESS if is_success(state) else Outcome.TIMEOUT,
        steps=tuple(records),
    )


def hindsight_label(
    episode: Episode, motion: MotionPolicy, episode_id: str | None = None
) -> list[AlphaSample]:
    """Relabel an episode with hindsight alpha targets, one per step.

    The final step of a successful episode completes the task, so only the
    steps before it are labeled: an episode ending at step n yields n - 1
    samples. Timeouts yield one sample per step. Order and grouping follow
    the episode, so the samples train the recurrent model as one sequence.
    """
    if episode.true_goal is None:
        raise LabelingError("episode has no true goal; cannot compute hindsight actions")
    eid = episode_id if episode_id is not None else f"{episode.mode.value}:{episode.seed}"
    obstacles = tuple(
        (c.center[0], c.center[1], c.radius) for c in episode.config.obstacles
    )
    steps = episode.steps[:-1] if episode.success else episode.steps
    samples = []
    for rec in steps:
        if rec.a_r is None or rec.scores is None or rec.confidence is None:
            raise LabelingError(
                f"step {rec.t} lacks model fields; collect episodes with models in the loop"
            )
        a_h = motion.hindsight_action(rec.state, episode.true_goal, episode.config, obstacles)
        label = hindsight_alpha(rec.a_u, rec.a_r, a_h)
        feats = arb_features(
            rec.state.gripper_pos, rec.a_u, rec.a_r, rec.scores, rec.confidence, rec.grabbed
        )
        samples.append(
            AlphaSample(
                episode_id=eid,
                t=rec.t,
                features=tuple(float(f) for f in feats),
                target=label.alpha,
                degenerate=label.degenerate,
                mode=episode.mode.value,
            )
        )
    return samples


def samples_to_sequences(samples: Sequence[AlphaSample]):
    """Group samples by episode id into (features, targets, mask) triples.

    Mask is 0 on degenerate steps: they stay in the sequence (the recurrent
    state must see them) but contribute nothing to the loss.
    """
    grouped: dict[str, list[AlphaSample]] = {}
    for s in samples:
        grouped.setdefault(s.episode_id, []).append(s)
    out = []
    for group in grouped.values():
        X = np.array([g.features for g in group], dtype=float)
        y = np.array([g.target for g in group], dtype=float)
        mask = np.array([0.0 if g.degenerate else 1.0 for g in group])
        out.append((X, y, mask))
    return out


def degenerate_fraction(samples: Sequence[AlphaSample]) -> float:
    if not samples:
        return 0.0
    return sum(1 for s in samples if s.degenerate) / len(samples)


def write_alpha_dataset(path, samples: Sequence[AlphaSample], meta: dict | None = None) -> None:
    header = {"kind": "alpha_dataset", "version": 1, "n_samples": len(samples)}
    if meta:
        header.update(meta)
    lines = [json.dumps(header, sort_keys=True)]
    for s in samples:
        lines.append(
            json.dumps(
                {
                    "episode": s.episode_id,
                    "t": s.t,
                    "features": list(s.features),
                    "target": s.target,
                    "degenerate": s.degenerate,
                    "mode": s.mode,
                },
                sort_keys=True,
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_alpha_dataset(path) -> tuple[dict, list[AlphaSample]]:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "alpha_dataset":
            raise ConfigurationError(f"{path}: not an alpha dataset")
        samples = []
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            samples.append(
                AlphaSample(
                    episode_id=d["episode"],
                    t=d["t"],
                    features=tuple(d["features"]),
                    target=d["target"],
                    degenerate=d["degenerate"],
                    mode=d["mode"],
                )
            )
    if len(samples) != header["n_samples"]:
        raise ConfigurationError(
            f"{path}: header says {header['n_samples']} samples, found {len(samples)}"
        )
    return header, samples


# ---------------------------------------------------------------------------
# Aggregation schedule.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    n_pretrain: int = 100
    episodes_per_iteration: int = 30
    n_iterations: int = 4

    def __post_init__(self):
        if self.n_pretrain < 1 or self.episodes_per_iteration < 1 or self.n_iterations < 0:
            raise ConfigurationError(f"bad schedule: {self}")

    def scaled(self, scale: float) -> "Schedule":
        """Shrink episode counts proportionally (iteration count unchanged)."""
        if scale <= 0:
            raise ConfigurationError(f"scale must be positive, got {scale}")
        return Schedule(
            n_pretrain=max(1, round(self.n_pretrain * scale)),
            episodes_per_iteration=max(1, round(self.episodes_per_iteration * scale)),
            n_iterations=self.n_iterations,
        )


SCHEDULE_PRESETS: dict[str, Schedule] = {
    "full": Schedule(),
    "paper-fig5": Schedule(),
}


@dataclass(frozen=True)
class StageResult:
    stage: str
    n_episodes: int
    n_success: int
    n_samples: int
    dataset_size: int
    degenerate_fraction: float
    model_path: str | None = None
    dataset_path: str | None = None


@dataclass(frozen=True)
class AggregationResult:
    stages: tuple[StageResult, ...]
    models: tuple[ArbitrationEstimator, ...]
    samples: tuple[AlphaSample, ...]

    @property
    def final_model(self) -> ArbitrationEstimator:
        return self.models[-1]


def run_aggregation(
    cfg: WorldConfig,
    intent: IntentEstimator,
    motion: MotionPolicy,
    users: SimUserParams | Sequence[SimUserParams],
    schedule: Schedule = Schedule(),
    seed: int = 0,
    out_dir=None,
    timid: TimidParams = TimidParams(),
    blend: str = "rotational",
    arb_params: dict | None = None,
) -> AggregationResult:
    """Pretrain on direct episodes, then aggregate shared-control rounds.

    Stage k in 1..n_iterations collects episodes under model_{k-1}, labels
    them, extends the dataset (never shrinking it), and retrains a new model
    initialized from model_{k-1}'s weights. When out_dir is given, every
    stage persists its model, the cumulative dataset, and its episodes as
    arb_00k.json / alpha_dataset_00k.jsonl / episodes_00k.jsonl.
    """
    user_pool = (users,) if isinstance(users, SimUserParams) else tuple(users)
    if not user_pool:
        raise ConfigurationError("need at least one user template")
    n_goals = len(cfg.goal_objects)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    samples: list[AlphaSample] = []
    models: list[ArbitrationEstimator] = []
    stages: list[StageResult] = []

    def collect_stage(stage_idx: int, n: int, mode: Mode, arb):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, stage_idx)))
        episodes = []
        for _ in range(n):
            template = user_pool[int(rng.integers(len(user_pool)))]
            params = replace(template, goal_id=int(rng.integers(n_goals)))
            ep_seed = int(rng.integers(2**63))
            episodes.append(
                collect_episode(
                    params, cfg, ep_seed, mode, intent, motion, arb,
                    timid=timid, blend=blend,
                )
            )
        return episodes

    def run_stage(stage_idx: int, stage_name: str, n: int, mode: Mode, prev):
        try:
            episodes = collect_stage(stage_idx, n, mode, prev)
            added = []
            for j, ep in enumerate(episodes):
                added.extend(hindsight_label(ep, motion, episode_id=f"{stage_name}-{j}"))
            samples.extend(added)
            est = ArbitrationEstimator(n_goals=n_goals, seed=seed, **(arb_params or {}))
            est.fit(
                samples_to_sequences(samples),
                init_weights=prev.weights_ if prev is not None else None,
            )
            model_path = dataset_path = None
            if out is not None:
                model_path = str(out / f"arb_{stage_idx:03d}.json")
                dataset_path = str(out / f"alpha_dataset_{stage_idx:03d}.jsonl")
                est.save(model_path)
                write_alpha_dataset(
                    dataset_path, samples, meta={"stage": stage_name, "seed": seed}
                )
                write_episodes(out / f"episodes_{stage_idx:03d}.jsonl", episodes)
            models.append(est)
            stages.append(
                StageResult(
                    stage=stage_name,
                    n_episodes=len(episodes),
                    n_success=sum(1 for ep in episodes if ep.success),
                    n_samples=len(added),
                    dataset_size=len(samples),
                    degenerate_fraction=degenerate_fraction(added),
                    model_path=model_path,
                    dataset_path=dataset_path,
                )
            )
        except StageError:
            raise
        except Exception as e:
            raise StageError(stage_name, str(e)) from e

    run_stage(0, "pretrain", schedule.n_pretrain, Mode.DIRECT, None)
    for k in range(1, schedule.n_iterations + 1):
        run_stage(
            k,
            f"iteration-{k}",
            schedule.episodes_per_iteration,
            Mode.SHARED_LEARNED,
            models[-1],
        )
    return AggregationResult(
        stages=tuple(stages), models=tuple(models), samples=tuple(samples)
    )


# ---------------------------------------------------------------------------
# Evaluation harness.
# ---------------------------------------------------------------------------

METRICS_COLUMNS = (
    "mode",
    "environment",
    "n",
    "success_rate",
    "mean_steps",
    "median_steps",
    "std_steps",
    "mean_alpha",
    "wrong_goal_fraction",
)


@dataclass(frozen=True)
class EvalTarget:
    """One environment row-group: a config plus the models trained for it."""

    environment: str
    cfg: WorldConfig
    intent: IntentEstimator | None
    motion: MotionPolicy
    arbitration: ArbitrationEstimator | None = None


def run_episodes(
    cfg: WorldConfig,
    mode: Mode,
    n_episodes: int,
    users: SimUserParams | Sequence[SimUserParams],
    intent: IntentEstimator | None,
    motion: MotionPolicy,
    arbitration: ArbitrationEstimator | None = None,
    seed: int = 0,
    timid: TimidParams = TimidParams(),
    blend: str = "rotational",
    force_alpha: float | None = None,
    perfect_goal_true: bool = False,
) -> list[Episode]:
    """Deterministic evaluation batch: episode i uses seed+i, goal i mod n.

    The same seed therefore pairs episodes one-to-one across modes. With
    perfect_goal_true the intent stage is replaced by an oracle fixed on the
    user's true goal (confidence 1), isolating arbitration behavior.
    """
    user_pool = (users,) if isinstance(users, SimUserParams) else tuple(users)
    n_goals = len(cfg.goal_objects)
    episodes = []
    for i in range(n_episodes):
        goal = i % n_goals
        params = replace(user_pool[i % len(user_pool)], goal_id=goal)
        episodes.append(
            collect_episode(
                params,
                cfg,
                seed + i,
                mode,
                intent,
                motion,
                arbitration,
                timid=timid,
                blend=blend,
                force_alpha=force_alpha,
                perfect_goal=goal if perfect_goal_true else None,
            )
        )
    return episodes


def summarize_episodes(mode, environment: str, episodes: Sequence[Episode]) -> dict:
    """One metrics row; step statistics cover successful episodes only."""
    n = len(episodes)
    success_steps = [ep.n_steps for ep in episodes if ep.success]
    alphas = [rec.alpha for ep in episodes for rec in ep.steps]
    wrong = [
        1.0 if rec.g_star != ep.true_goal else 0.0
        for ep in episodes
        for rec in ep.steps
        if rec.g_star is not None and ep.true_goal is not None
    ]
    return {
        "mode": mode.value if isinstance(mode, Mode) else str(mode),
        "environment": environment,
        "n": n,
        "success_rate": len(success_steps) / n if n else float("nan"),
        "mean_steps": float(np.mean(success_steps)) if success_steps else float("nan"),
        "median_steps": float(np.median(success_steps)) if success_steps else float("nan"),
        "std_steps": float(np.std(success_steps)) if success_steps else float("nan"),
        "mean_alpha": float(np.mean(alphas)) if alphas else float("nan"),
        "wrong_goal_fraction": float(np.mean(wrong)) if wrong else float("nan"),
    }


def evaluate(
    targets: Sequence[EvalTarget],
    modes: Sequence[Mode],
    n_episodes: int,
    users: SimUserParams | Sequence[SimUserParams],
    seed: int = 0,
    timid: TimidParams = TimidParams(),
    blend: str = "rotational",
    perfect_goal_true: bool = False,
) -> list[dict]:
    """Metrics table: one row per (environment, mode), paired seeds."""
    rows = []
    for tgt in targets:
        for mode in modes:
            eps = run_episodes(
                tgt.cfg,
                mode,
                n_episodes,
                users,
                tgt.intent,
                tgt.motion,
                tgt.arbitration,
                seed=seed,
                timid=timid,
                blend=blend,
                perfect_goal_true=perfect_goal_true,
            )
            rows.append(summarize_episodes(mode, tgt.environment, eps))
    return rows


def write_metrics_csv(path, rows: Sequence[dict]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(METRICS_COLUMNS)
    for row in rows:
        writer.writerow([row[c] for c in METRICS_COLUMNS])
    atomic_write_text(path, buf.getvalue())


def replay_episode(
    episode: Episode,
    intent: IntentEstimator | None,
    motion: MotionPolicy,
    arbitration: ArbitrationEstimator | None = None,
    timid: TimidParams = TimidParams(),
    blend: str = "rotational",
) -> Episode:
    """Re-run a recorded command stream through the decision chain.

    With the models that produced the recording, the result is bitwise
    identical to the original episode (recorded configs carry materialized
    obstacles, so reset is reproducible).
    """
    state, resolved = reset(episode.config, episode.seed)
    controller = SharedController(
        resolved, episode.mode, intent, motion, arbitration, timid=timid, blend=blend
    )
    records = []
    for rec in episode.steps:
        d = controller.decide(state, rec.a_u)
        records.append(
            StepRecord(
                t=state.t,
                state=state,
                a_u=rec.a_u,
                a_s=d.a_s,
                alpha=d.alpha.alpha,
                a_r=d.a_r,
                scores=tuple(d.estimate.windowed),
                g_star=d.estimate.g_star,
                confidence=d.estimate.confidence,
            )
        )
        state = step(state, d.a_s, resolved)
    return Episode(
        config=resolved,
        seed=episode.seed,
        mode=episode.mode,
        true_goal=episode.true_goal,
        outcome=Outcome.SUCCESS if is_success(state) else Outcome.TIMEOUT,
        steps=tuple(records),
    )
