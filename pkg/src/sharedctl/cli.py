"""Command-line pipeline: data generation, training stages, evaluation.

Each subcommand reads an optional JSON experiment config, runs one stage
deterministically from explicit seeds, writes its artifacts atomically
under --out with fixed names (so stages chain without extra flags), and
prints a one-line JSON summary on success. Exit codes: 0 ok, 1 stage
failure (summary goes to stderr with the stage tag), 2 usage error.

Artifact names: trajopt_demos.jsonl, motion.json, user_episodes.jsonl,
intent.json, arb_00k.json / alpha_dataset_00k.jsonl / episodes_00k.jsonl
(lineage index k), metrics.csv, traces.csv.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click

from .arbitration import ArbitrationEstimator, TimidParams, timid_alpha
from .dagger import (
    SCHEDULE_PRESETS,
    EvalTarget,
    Schedule,
    evaluate,
    run_aggregation,
    write_metrics_csv,
)
from .env import WorldConfig, config_from_dict
from .episodes import Mode, read_episodes, write_episodes
from .errors import ConfigurationError, StageError
from .fileio import atomic_write_text
from .intent import IntentEstimator
from .motion import MotionPolicy
from .sim_user import SimUserParams, run_direct_episode
from .trajopt import OptParams, generate_demo_dataset, read_demo_dataset

FULL_DEMO_TRAJECTORIES = 3000
FULL_USER_EPISODES = 1400


@dataclass
class ExperimentConfig:
    """Parsed experiment config file; every section is optional."""

    world: WorldConfig = field(default_factory=WorldConfig)
    opt_params: OptParams = field(default_factory=OptParams)
    user: SimUserParams = field(default_factory=lambda: SimUserParams(goal_id=0))
    intent_params: dict = field(default_factory=dict)
    motion_params: dict = field(default_factory=dict)
    arb_params: dict = field(default_factory=dict)
    timid: TimidParams = field(default_factory=TimidParams)
    blend: str = "rotational"
    schedule: Schedule = field(default_factory=Schedule)


_SECTIONS = {
    "world", "opt_params", "sim_user", "intent", "motion",
    "arbitration", "timid", "blend", "schedule",
}


def load_experiment_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise click.UsageError(f"config {path} is not valid JSON: {e}")
    unknown = set(doc) - _SECTIONS
    if unknown:
        raise click.UsageError(f"config {path}: unknown sections {sorted(unknown)}")
    try:
        cfg = ExperimentConfig()
        if "world" in doc:
            cfg.world = config_from_dict(doc["world"])
        if "opt_params" in doc:
            cfg.opt_params = OptParams(**doc["opt_params"])
        if "sim_user" in doc:
            cfg.user = SimUserParams(goal_id=0, **doc["sim_user"])
        cfg.intent_params = doc.get("intent", {})
        cfg.motion_params = doc.get("motion", {})
        cfg.arb_params = doc.get("arbitration", {})
        if "timid" in doc:
            cfg.timid = TimidParams(**doc["timid"])
        cfg.blend = doc.get("blend", "rotational")
        if "schedule" in doc:
            sched = doc["schedule"]
            if isinstance(sched, str):
                if sched not in SCHEDULE_PRESETS:
                    raise ConfigurationError(f"unknown schedule preset {sched!r}")
                cfg.schedule = SCHEDULE_PRESETS[sched]
            else:
                cfg.schedule = Schedule(**sched)
        return cfg
    except (ConfigurationError, TypeError, ValueError) as e:
        raise click.UsageError(f"config {path}: {e}")


def _jsonable(value):
    """Strict-JSON view of a summary: non-finite floats become null."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _emit(summary: dict) -> None:
    click.echo(json.dumps(_jsonable(summary), sort_keys=True, allow_nan=False))


def _fail(stage: str, exc: BaseException) -> None:
    click.echo(
        json.dumps({"status": "error", "stage": stage, "message": str(exc)}),
        err=True,
    )
    sys.exit(1)


def _guard(stage: str, fn):
    """Run a stage body; map failures to exit 1 with the stage tag."""
    try:
        return fn()
    except click.ClickException:
        raise
    except StageError as e:
        _fail(e.stage, e)
    except Exception as e:
        _fail(stage, e)


def _scaled(n: int, scale: float) -> int:
    if scale <= 0:
        raise click.UsageError(f"--scale must be positive, got {scale}")
    return max(1, round(n * scale))


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
    default=None, help="Experiment config JSON.",
)
seed_option = click.option("--seed", type=int, default=0, show_default=True)
out_option = click.option(
    "--out", type=click.Path(file_okay=False), default="artifacts",
    show_default=True, help="Artifact directory.",
)
scale_option = click.option(
    "--scale", type=float, default=1.0, show_default=True,
    help="Proportionally shrink dataset sizes.",
)


@click.group()
def main():
    """Shared-autonomy pipeline: datasets, training, aggregation, evaluation."""


@main.command("gen-trajopt-data")
@config_option
@seed_option
@out_option
@scale_option
@click.option("--n", type=int, default=FULL_DEMO_TRAJECTORIES, show_default=True,
              help="Pick-and-place demonstrations to optimize.")
def gen_trajopt_data(config_path, seed, out, scale, n):
    """Optimize demonstration trajectories and label velocities."""
    cfg = load_experiment_config(config_path)
    n_eff = _scaled(n, scale)

    def body():
        path = _out_dir(out) / "trajopt_demos.jsonl"
        header = generate_demo_dataset(
            path, cfg=cfg.world, n_trajectories=n_eff, seed=seed,
            params=cfg.opt_params,
        )
        _emit({
            "command": "gen-trajopt-data", "status": "ok", "out": str(path),
            "n_trajectories": n_eff, "seed": seed,
            "n_steps": header["n_steps"], "attempts": header["attempts"],
        })

    _guard("gen-trajopt-data", body)


@main.command("train-motion")
@config_option
@seed_option
@out_option
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Demo dataset (default: <out>/trajopt_demos.jsonl).")
def train_motion(config_path, seed, out, data):
    """Fit the motion policy on optimized demonstrations."""
    cfg = load_experiment_config(config_path)

    def body():
        out_path = _out_dir(out)
        data_path = Path(data) if data else out_path / "trajopt_demos.jsonl"
        header, records = read_demo_dataset(data_path)
        world = config_from_dict(header["config"])
        n_obstacles = (
            world.random_obstacles.count
            if world.random_obstacles is not None
            else len(world.obstacles)
        )
        params = dict(cfg.motion_params)
        params.setdefault("seed", seed)
        est = MotionPolicy(v_max=world.v_max, n_obstacles=n_obstacles, **params)
        est.fit(records)
        model_path = out_path / "motion.json"
        est.save(model_path)
        _emit({
            "command": "train-motion", "status": "ok", "out": str(model_path),
            "n_records": len(records), "validation_mse": est.validation_mse_,
        })

    _guard("train-motion", body)


@main.command("gen-user-data")
@config_option
@seed_option
@out_option
@scale_option
@click.option("--n", type=int, default=FULL_USER_EPISODES, show_default=True,
              help="Scripted direct-control episodes.")
def gen_user_data(config_path, seed, out, scale, n):
    """Record scripted-user direct-control episodes for intent training."""
    cfg = load_experiment_config(config_path)
    n_eff = _scaled(n, scale)

    def body():
        from dataclasses import replace

        path = _out_dir(out) / "user_episodes.jsonl"
        n_goals = len(cfg.world.goal_objects)
        episodes = []
        for i in range(n_eff):
            params = replace(cfg.user, goal_id=i % n_goals, seed=seed + i)
            episodes.append(run_direct_episode(params, cfg.world, seed=seed + i))
        write_episodes(path, episodes)
        _emit({
            "command": "gen-user-data", "status": "ok", "out": str(path),
            "n_episodes": n_eff,
            "success_rate": sum(ep.success for ep in episodes) / n_eff,
        })

    _guard("gen-user-data", body)


@main.command("train-intent")
@config_option
@seed_option
@out_option
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Episode file (default: <out>/user_episodes.jsonl).")
def train_intent(config_path, seed, out, data):
    """Fit the goal-inference model on direct-control episodes."""
    cfg = load_experiment_config(config_path)

    def body():
        out_path = _out_dir(out)
        data_path = Path(data) if data else out_path / "user_episodes.jsonl"
        episodes = read_episodes(data_path)
        params = dict(cfg.intent_params)
        params.setdefault("seed", seed)
        est = IntentEstimator(**params)
        est.fit(episodes)
        model_path = out_path / "intent.json"
        est.save(model_path)
        _emit({
            "command": "train-intent", "status": "ok", "out": str(model_path),
            "n_episodes": len(episodes), "best_val_loss": est.best_val_loss_,
        })

    _guard("train-intent", body)


def _load_models(models_dir: Path, need_arb: bool = False):
    intent = IntentEstimator.load(models_dir / "intent.json")
    motion = MotionPolicy.load(models_dir / "motion.json")
    arb = None
    lineage = sorted(models_dir.glob("arb_*.json"))
    if lineage:
        arb = ArbitrationEstimator.load(lineage[-1])
    if need_arb and arb is None:
        raise ConfigurationError(f"no arb_*.json lineage under {models_dir}")
    return intent, motion, arb


@main.command("pretrain-arb")
@config_option
@seed_option
@out_option
@scale_option
@click.option("--n", type=int, default=None,
              help="Direct episodes (default: schedule preset count).")
def pretrain_arb(config_path, seed, out, scale, n):
    """Train the first arbitration model from relabeled direct episodes."""
    cfg = load_experiment_config(config_path)

    def body():
        out_path = _out_dir(out)
        intent, motion, _ = _load_models(out_path)
        n_pre = n if n is not None else cfg.schedule.n_pretrain
        schedule = Schedule(
            n_pretrain=_scaled(n_pre, scale),
            episodes_per_iteration=cfg.schedule.episodes_per_iteration,
            n_iterations=0,
        )
        result = run_aggregation(
            cfg.world, intent, motion, cfg.user, schedule=schedule, seed=seed,
            out_dir=out_path, timid=cfg.timid, blend=cfg.blend,
            arb_params=cfg.arb_params,
        )
        stage = result.stages[0]
        _emit({
            "command": "pretrain-arb", "status": "ok", "out": stage.model_path,
            "n_episodes": stage.n_episodes, "n_samples": stage.n_samples,
            "degenerate_fraction": stage.degenerate_fraction,
        })

    _guard("pretrain-arb", body)


@main.command("dagger")
@config_option
@seed_option
@out_option
@scale_option
@click.option("--preset", type=click.Choice(sorted(SCHEDULE_PRESETS)), default=None,
              help="Schedule preset (overrides config).")
def dagger_cmd(config_path, seed, out, scale, preset):
    """Run the full collect/relabel/retrain aggregation schedule."""
    cfg = load_experiment_config(config_path)

    def body():
        out_path = _out_dir(out)
        intent, motion, _ = _load_models(out_path)
        schedule = SCHEDULE_PRESETS[preset] if preset else cfg.schedule
        result = run_aggregation(
            cfg.world, intent, motion, cfg.user,
            schedule=schedule.scaled(scale), seed=seed, out_dir=out_path,
            timid=cfg.timid, blend=cfg.blend, arb_params=cfg.arb_params,
        )
        _emit({
            "command": "dagger", "status": "ok",
            "models": [s.model_path for s in result.stages],
            "stages": [
                {
                    "stage": s.stage, "n_episodes": s.n_episodes,
                    "n_success": s.n_success, "dataset_size": s.dataset_size,
                    "degenerate_fraction": s.degenerate_fraction,
                }
                for s in result.stages
            ],
        })

    _guard("dagger", body)


@main.command("eval")
@config_option
@seed_option
@out_option
@click.option("--modes", default="direct,shared_baseline,shared_learned",
              show_default=True, help="Comma-separated control modes.")
@click.option("--episodes", type=int, default=50, show_default=True)
@click.option("--models", "models_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Model directory (default: --out).")
def eval_cmd(config_path, seed, out, modes, episodes, models_dir):
    """Run paired-seed evaluation batches and write metrics.csv."""
    cfg = load_experiment_config(config_path)
    try:
        mode_list = [Mode(m.strip()) for m in modes.split(",") if m.strip()]
    except ValueError as e:
        raise click.UsageError(f"bad --modes: {e}")
    if not mode_list:
        raise click.UsageError("--modes is empty")

    def body():
        out_path = _out_dir(out)
        src = Path(models_dir) if models_dir else out_path
        intent, motion, arb = _load_models(
            src, need_arb=Mode.SHARED_LEARNED in mode_list
        )
        env_name = (
            "obstacles"
            if cfg.world.obstacles or cfg.world.random_obstacles
            else "obstacle_free"
        )
        targets = [EvalTarget(env_name, cfg.world, intent, motion, arb)]
        rows = evaluate(
            targets, mode_list, episodes, cfg.user, seed=seed,
            timid=cfg.timid, blend=cfg.blend,
        )
        path = out_path / "metrics.csv"
        write_metrics_csv(path, rows)
        _emit({
            "command": "eval", "status": "ok", "out": str(path), "rows": rows,
        })

    _guard("eval", body)


TRACE_COLUMNS = ("t", "alpha", "confidence", "timid_alpha", "grabbed", "g_star", "true_goal")


def export_traces(episode_path, out_path, index: int = 0, timid: TimidParams = TimidParams()) -> int:
    """Write one episode's per-step trace table; returns the row count."""
    episodes = read_episodes(episode_path)
    if not 0 <= index < len(episodes):
        raise ConfigurationError(
            f"episode index {index} out of range ({len(episodes)} episodes in file)"
        )
    ep = episodes[index]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(TRACE_COLUMNS)
    for rec in ep.steps:
        timid_col = (
            timid_alpha(rec.confidence, timid).alpha if rec.confidence is not None else ""
        )
        writer.writerow([
            rec.t,
            rec.alpha,
            rec.confidence if rec.confidence is not None else "",
            timid_col,
            int(rec.grabbed),
            rec.g_star if rec.g_star is not None else "",
            ep.true_goal if ep.true_goal is not None else "",
        ])
    atomic_write_text(out_path, buf.getvalue())
    return ep.n_steps


@main.command("export-traces")
@click.option("--episodes", "episode_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Episode JSONL file.")
@out_option
@click.option("--index", type=int, default=0, show_default=True,
              help="Which episode in the file.")
def export_traces_cmd(episode_path, out, index):
    """Export one episode's alpha/confidence traces as CSV."""

    def body():
        path = _out_dir(out) / "traces.csv"
        n = export_traces(episode_path, path, index=index)
        _emit({
            "command": "export-traces", "status": "ok", "out": str(path), "rows": n,
        })

    _guard("export-traces", body)


@main.command("serve")
@config_option
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--models", "models_dir", type=click.Path(exists=True, file_okay=False),
              default="artifacts", show_default=True)
@click.option("--record", "record_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for recorded session episodes.")
@click.option("--heatmap-every", type=int, default=5, show_default=True,
              help="Send the heatmap every Nth tick (1 = every tick).")
def serve_cmd(config_path, port, models_dir, record_dir, heatmap_every):
    """Serve the real-time teleoperation WebSocket endpoint."""
    cfg = load_experiment_config(config_path)

    def body():
        import asyncio

        from .service import serve_forever

        intent, motion, arb = _load_models(Path(models_dir))
        click.echo(json.dumps({
            "command": "serve", "status": "ok", "port": port,
            "models": str(models_dir),
        }))
        asyncio.run(serve_forever(
            cfg.world, intent, motion, arb, port=port,
            record_dir=record_dir, heatmap_every=heatmap_every,
            timid=cfg.timid, blend=cfg.blend,
        ))

    _guard("serve", body)


if __name__ == "__main__":
    main()
