"""End-to-end checks for the pipeline CLI.

A module-scoped fixture runs the full stage chain once at toy sizes into
a shared directory; individual tests assert on the artifacts, summaries,
exit codes, and rerun determinism.
"""

import dataclasses
import json

import pytest
from click.testing import CliRunner

from sharedctl.arbitration import TimidParams, timid_alpha
from sharedctl.cli import TRACE_COLUMNS, main
from sharedctl.env import WorldConfig, config_to_dict
from sharedctl.episodes import read_episodes

runner = CliRunner()


def run_ok(args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output.strip().splitlines()[-1])
    assert summary["status"] == "ok"
    return summary


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = {
        "world": config_to_dict(dataclasses.replace(WorldConfig(), max_steps=120)),
        "opt_params": {"max_iters": 40},
        "sim_user": {"noise_sigma": 0.12, "v_pref": 0.3},
        "intent": {"hidden_dim": 8, "epochs": 2},
        "motion": {"hidden": 16, "epochs": 30},
        "arbitration": {"hidden": 8, "epochs": 2},
        "schedule": {"n_pretrain": 2, "episodes_per_iteration": 1, "n_iterations": 1},
    }
    cfg_path = root / "experiment.json"
    cfg_path.write_text(json.dumps(cfg))
    out = root / "artifacts"
    base = ["--config", str(cfg_path), "--out", str(out)]
    summaries = {
        "gen-trajopt-data": run_ok(
            ["gen-trajopt-data", *base, "--n", "6", "--seed", "7"]
        ),
        "train-motion": run_ok(["train-motion", *base, "--seed", "1"]),
        "gen-user-data": run_ok(["gen-user-data", *base, "--n", "8", "--seed", "3"]),
        "train-intent": run_ok(["train-intent", *base, "--seed", "2"]),
        "pretrain-arb": run_ok(["pretrain-arb", *base, "--seed", "5"]),
        "dagger": run_ok(["dagger", *base, "--seed", "5"]),
    }
    return {"root": root, "cfg": cfg_path, "out": out, "summaries": summaries}


def test_stage_artifacts_exist(workdir):
    out = workdir["out"]
    for name in (
        "trajopt_demos.jsonl", "motion.json", "user_episodes.jsonl", "intent.json",
        "arb_000.json", "alpha_dataset_000.jsonl", "episodes_000.jsonl",
        "arb_001.json",
    ):
        assert (out / name).exists(), name


def test_summaries_are_strict_json(workdir):
    # json.loads in run_ok already parsed them; NaN must never appear.
    for summary in workdir["summaries"].values():
        assert "NaN" not in json.dumps(summary)


def test_gen_trajopt_data_rerun_is_byte_identical(workdir):
    out_a = workdir["root"] / "rerun_a"
    out_b = workdir["root"] / "rerun_b"
    args = ["gen-trajopt-data", "--config", str(workdir["cfg"]), "--n", "3", "--seed", "11"]
    run_ok(args + ["--out", str(out_a)])
    run_ok(args + ["--out", str(out_b)])
    a = (out_a / "trajopt_demos.jsonl").read_bytes()
    assert a == (out_b / "trajopt_demos.jsonl").read_bytes()
    run_ok(args + ["--out", str(out_a)])
    assert a == (out_a / "trajopt_demos.jsonl").read_bytes()


def test_scale_shrinks_dataset(workdir):
    out = workdir["root"] / "scaled"
    summary = run_ok([
        "gen-user-data", "--config", str(workdir["cfg"]), "--out", str(out),
        "--n", "10", "--scale", "0.2", "--seed", "0",
    ])
    assert summary["n_episodes"] == 2
    assert len(read_episodes(out / "user_episodes.jsonl")) == 2


def test_dagger_preset_lineage_count(workdir):
    out = workdir["root"] / "lineage"
    for name in ("motion.json", "intent.json"):
        out.mkdir(exist_ok=True)
        (out / name).write_bytes((workdir["out"] / name).read_bytes())
    summary = run_ok([
        "dagger", "--config", str(workdir["cfg"]), "--out", str(out),
        "--preset", "paper-fig5", "--scale", "0.02", "--seed", "4",
    ])
    assert len(summary["models"]) == 5
    assert sorted(out.glob("arb_*.json")) == [out / f"arb_{k:03d}.json" for k in range(5)]


def test_eval_writes_one_row_per_mode_and_reruns_identically(workdir):
    args = [
        "eval", "--config", str(workdir["cfg"]), "--out", str(workdir["out"]),
        "--modes", "direct,shared_baseline", "--episodes", "3", "--seed", "9",
    ]
    summary = run_ok(args)
    path = workdir["out"] / "metrics.csv"
    first = path.read_bytes()
    lines = first.decode().strip().splitlines()
    assert len(lines) == 3
    assert lines[0].split(",")[0] == "mode"
    assert [r["mode"] for r in summary["rows"]] == ["direct", "shared_baseline"]
    run_ok(args)
    assert path.read_bytes() == first


def test_eval_learned_mode_needs_lineage(workdir, tmp_path):
    for name in ("motion.json", "intent.json"):
        (tmp_path / name).write_bytes((workdir["out"] / name).read_bytes())
    result = runner.invoke(main, [
        "eval", "--config", str(workdir["cfg"]), "--out", str(tmp_path),
        "--modes", "shared_learned", "--episodes", "1",
    ])
    assert result.exit_code == 1
    err = json.loads(result.stderr.strip().splitlines()[-1])
    assert err["status"] == "error"
    assert err["stage"] == "eval"


@pytest.fixture(scope="module")
def trace_run(workdir):
    episodes_file = workdir["out"] / "episodes_001.jsonl"
    out = workdir["root"] / "traces"
    summary = run_ok(["export-traces", "--episodes", str(episodes_file), "--out", str(out)])
    rows = (out / "traces.csv").read_text().strip().splitlines()
    return episodes_file, summary, rows


class TestExportTraces:
    def test_header_and_row_count(self, trace_run):
        episodes_file, summary, rows = trace_run
        assert rows[0] == ",".join(TRACE_COLUMNS)
        episode = read_episodes(episodes_file)[0]
        assert len(rows) - 1 == episode.n_steps == summary["rows"]

    def test_timid_column_recomputes_from_confidence(self, trace_run):
        _, _, rows = trace_run
        for line in rows[1:]:
            cells = line.split(",")
            conf, timid_col = float(cells[2]), float(cells[3])
            assert timid_col == pytest.approx(timid_alpha(conf, TimidParams()).alpha)

    def test_direct_episode_alpha_all_zero(self, workdir):
        episodes_file = workdir["out"] / "episodes_000.jsonl"
        out = workdir["root"] / "traces_direct"
        run_ok(["export-traces", "--episodes", str(episodes_file), "--out", str(out)])
        rows = (out / "traces.csv").read_text().strip().splitlines()[1:]
        assert all(float(line.split(",")[1]) == 0.0 for line in rows)

    def test_plain_user_episode_leaves_model_columns_empty(self, workdir):
        out = workdir["root"] / "traces_plain"
        run_ok([
            "export-traces", "--episodes", str(workdir["out"] / "user_episodes.jsonl"),
            "--out", str(out), "--index", "1",
        ])
        first = (out / "traces.csv").read_text().strip().splitlines()[1]
        cells = first.split(",")
        assert cells[2] == "" and cells[3] == "" and cells[5] == ""

    def test_malformed_episode_file_fails_with_stage_tag(self, workdir, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"kind": "something_else", "version": 1}\n')
        result = runner.invoke(main, ["export-traces", "--episodes", str(bad), "--out", str(tmp_path)])
        assert result.exit_code == 1
        assert json.loads(result.stderr.strip().splitlines()[-1])["stage"] == "export-traces"

    def test_index_out_of_range(self, workdir, tmp_path):
        result = runner.invoke(main, [
            "export-traces", "--episodes", str(workdir["out"] / "episodes_000.jsonl"),
            "--out", str(tmp_path), "--index", "99",
        ])
        assert result.exit_code == 1


class TestUsageErrors:
    def test_unknown_config_section_exits_2(self, tmp_path):
        bad = tmp_path / "cfg.json"
        bad.write_text(json.dumps({"wrold": {}}))
        result = runner.invoke(main, ["gen-user-data", "--config", str(bad)])
        assert result.exit_code == 2
        assert "wrold" in result.stderr

    def test_bad_config_value_exits_2(self, tmp_path):
        bad = tmp_path / "cfg.json"
        bad.write_text(json.dumps({"opt_params": {"max_iterations": 5}}))
        result = runner.invoke(main, ["gen-trajopt-data", "--config", str(bad)])
        assert result.exit_code == 2

    def test_config_not_json_exits_2(self, tmp_path):
        bad = tmp_path / "cfg.json"
        bad.write_text("not json {")
        result = runner.invoke(main, ["gen-user-data", "--config", str(bad)])
        assert result.exit_code == 2

    def test_missing_config_file_exits_2(self):
        result = runner.invoke(main, ["gen-user-data", "--config", "/nonexistent.json"])
        assert result.exit_code == 2

    def test_bad_mode_exits_2(self, tmp_path):
        result = runner.invoke(main, ["eval", "--modes", "direct,bogus", "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_nonpositive_scale_exits_2(self, tmp_path):
        result = runner.invoke(main, ["gen-user-data", "--scale", "0", "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_unknown_preset_exits_2(self, tmp_path):
        result = runner.invoke(main, ["dagger", "--preset", "fig9", "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_missing_models_is_stage_failure(self, tmp_path):
        result = runner.invoke(main, ["pretrain-arb", "--out", str(tmp_path)])
        assert result.exit_code == 1
        assert json.loads(result.stderr.strip().splitlines()[-1])["stage"] == "pretrain-arb"
