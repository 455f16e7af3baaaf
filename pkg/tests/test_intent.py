"""Goal inference: grid geometry, score windows, and the heatmap model."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from sharedctl.env import SquareObject, WorldConfig
from sharedctl.errors import TrainingError
from sharedctl.intent import (
    GRID,
    IntentEstimator,
    IntentSession,
    goal_cell,
    goal_footprints,
    goal_scores,
    intent_features,
    intent_network,
    target_blob,
    update_goal_estimate,
)
from sharedctl.sim_user import SimUserParams, run_direct_episode

CFG = WorldConfig()


def test_goal_cell_maps_row_col():
    # y is the row axis, x the column axis; floor(coord * 28)
    assert goal_cell((0.2, 0.75), CFG) == (21, 5)
    assert goal_cell((0.0, 0.0), CFG) == (0, 0)


def test_goal_cell_clips_to_grid():
    assert goal_cell((1.0, 1.0), CFG) == (GRID - 1, GRID - 1)
    assert goal_cell((-0.3, 2.0), CFG) == (GRID - 1, 0)


def test_default_footprint_cell_counts():
    # 0.06-wide squares straddle cell boundaries differently per x position
    fp = goal_footprints(CFG)
    assert fp.shape == (4, GRID, GRID)
    assert [int(m.sum()) for m in fp] == [2, 4, 4, 2]


def test_footprints_disjoint():
    fp = goal_footprints(CFG)
    assert (fp.sum(axis=0) <= 1).all()


def test_all_mass_in_one_cell_scores_one():
    fp = goal_footprints(CFG)
    row, col = np.argwhere(fp[2])[0]
    heatmap = np.zeros((GRID, GRID))
    heatmap[row, col] = 1.0
    c = goal_scores(heatmap, CFG)
    assert c[2] == 1.0
    assert c[0] == c[1] == c[3] == 0.0


def test_uniform_heatmap_symmetric_objects_equal_scores():
    # half_extent 0.05 gives every object a 3x2-cell footprint
    cfg = WorldConfig(
        goal_objects=tuple(SquareObject((x, 0.75), 0.05) for x in (0.2, 0.4, 0.6, 0.8))
    )
    heatmap = np.full((GRID, GRID), 1.0 / GRID**2)
    c = goal_scores(heatmap, cfg)
    assert np.all(np.abs(c - c[0]) <= 1e-12)
    assert c[0] > 0


def test_four_cells_of_005_score_02():
    fp = goal_footprints(CFG)
    assert int(fp[1].sum()) == 4
    heatmap = np.zeros((GRID, GRID))
    heatmap[fp[1]] = 0.05
    assert goal_scores(heatmap, CFG)[1] == pytest.approx(0.2, abs=1e-15)


def test_update_goal_estimate_single_step():
    g, conf = update_goal_estimate([(0.9, 0.0, 0.0, 0.0)])
    assert g == 0
    assert conf == 1.0


def test_update_goal_estimate_all_zero_degenerate():
    g, conf = update_goal_estimate([(0.0, 0.0, 0.0, 0.0)])
    assert g == 0
    assert conf == 0.25


def test_update_goal_estimate_two_step_window():
    g, conf = update_goal_estimate([(0.2, 0.4, 0.0, 0.0), (0.5, 0.2, 0.0, 0.0)])
    assert g == 0
    assert conf == pytest.approx(0.7 / 1.3)


def test_update_goal_estimate_tie_lowest_id():
    g, _ = update_goal_estimate([(0.3, 0.3, 0.1, 0.3)])
    assert g == 0


def test_update_goal_estimate_scale_invariant():
    window = [(0.2, 0.4, 0.0, 0.1), (0.5, 0.2, 0.3, 0.0)]
    scaled = [tuple(3.7 * c for c in step) for step in window]
    assert update_goal_estimate(window) == pytest.approx(update_goal_estimate(scaled))


def test_update_goal_estimate_empty_rejected():
    with pytest.raises(ValueError):
        update_goal_estimate([])


@given(
    st.lists(
        st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4),
        min_size=1,
        max_size=10,
    )
)
def test_update_goal_estimate_confidence_in_range(window):
    g, conf = update_goal_estimate(window)
    n = 4
    assert 0 <= g < n
    assert 1.0 / n - 1e-12 <= conf <= 1.0 + 1e-12
    S = np.sum(window, axis=0)
    if S.sum() > 0:
        assert g == int(np.argmax(S))


def test_target_blob_normalized_and_peaked():
    blob = target_blob((21, 5))
    assert blob.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.unravel_index(blob.argmax(), blob.shape) == (21, 5)
    assert blob[21, 6] > blob[21, 9]


def _initialized(hidden=12, seed=0):
    """Estimator with random (untrained) weights, bypassing fit."""
    est = IntentEstimator(hidden_dim=hidden, seed=seed)
    est.network_ = intent_network(hidden)
    est.weights_ = est.network_.init_weights(seed)
    return est


def test_untrained_heatmaps_normalized():
    est = _initialized()
    history = np.random.default_rng(3).normal(size=(5, 4)) * 0.3
    maps = est.predict_heatmap(history)
    assert maps.shape == (5, GRID, GRID)
    assert np.all(maps >= 0)
    np.testing.assert_allclose(maps.sum(axis=(1, 2)), 1.0, atol=1e-9)


def test_incremental_matches_full_sequence():
    est = _initialized(seed=7)
    rng = np.random.default_rng(11)
    history = rng.normal(size=(50, 4)) * 0.2
    full = est.predict_heatmap(history)
    session = est.session(CFG)
    worst = 0.0
    for t in range(50):
        inc = session.step(history[t]).heatmap
        worst = max(worst, float(np.abs(inc - full[t]).max()))
    assert worst <= 1e-12


def test_session_windowed_scores_sum_last_k():
    est = IntentEstimator(hidden_dim=10, window=3, seed=5)
    est.network_ = intent_network(10)
    est.weights_ = est.network_.init_weights(5)
    session = est.session(CFG)
    rng = np.random.default_rng(2)
    per_step = []
    estimate = None
    for t in range(5):
        estimate = session.step(rng.normal(size=4) * 0.1)
        per_step.append(np.array(estimate.scores))
    expected = np.sum(per_step[-3:], axis=0)
    np.testing.assert_allclose(np.array(estimate.windowed), expected, atol=1e-15)
    g, conf = update_goal_estimate(per_step[-3:])
    assert estimate.g_star == g
    assert estimate.confidence == pytest.approx(conf)


def test_predict_requires_fit():
    with pytest.raises(NotFittedError):
        IntentEstimator().predict_heatmap(np.zeros((3, 4)))


def test_bad_history_shape_rejected():
    est = _initialized()
    with pytest.raises(ValueError):
        est.predict_heatmap(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        est.predict_heatmap(np.zeros(4))


def test_fit_rejects_empty_and_unlabeled():
    with pytest.raises(TrainingError):
        IntentEstimator().fit([])
    ep = run_direct_episode(SimUserParams(goal_id=1, noise_sigma=0.0), CFG, seed=0)
    unlabeled = type(ep)(
        config=ep.config, seed=ep.seed, mode=ep.mode, true_goal=None,
        outcome=ep.outcome, steps=ep.steps,
    )
    with pytest.raises(TrainingError):
        IntentEstimator().fit([unlabeled])


@pytest.fixture(scope="module")
def tiny_fit():
    episodes = [
        run_direct_episode(
            SimUserParams(goal_id=g, noise_sigma=0.05, seed=i), CFG, seed=10 * i + g
        )
        for i in range(3)
        for g in range(4)
    ]
    est = IntentEstimator(hidden_dim=8, epochs=2, lr=3e-3, seed=1).fit(episodes)
    return est, episodes


def test_fit_loss_decreases_after_first_epoch(tiny_fit):
    est, _ = tiny_fit
    assert est.loss_history_[1] < est.loss_history_[0]
    assert len(est.val_history_) == 2


def test_fit_predictions_normalized(tiny_fit):
    est, episodes = tiny_fit
    ep = episodes[0]
    X = np.stack([intent_features(r.state, r.a_u) for r in ep.steps])
    maps = est.predict_heatmap(X)
    np.testing.assert_allclose(maps.sum(axis=(1, 2)), 1.0, atol=1e-9)


def test_save_load_roundtrip(tiny_fit, tmp_path):
    est, episodes = tiny_fit
    path = tmp_path / "intent.json"
    est.save(path)
    loaded = IntentEstimator.load(path)
    assert loaded.get_params() == est.get_params()
    X = np.stack(
        [intent_features(r.state, r.a_u) for r in episodes[0].steps[:10]]
    )
    np.testing.assert_array_equal(loaded.predict_heatmap(X), est.predict_heatmap(X))


def test_load_rejects_other_model(tmp_path, tiny_fit):
    est, _ = tiny_fit
    path = tmp_path / "weights.json"
    est.save(path)
    text = path.read_text().replace('"intent"', '"motion"')
    path.write_text(text)
    with pytest.raises(TrainingError):
        IntentEstimator.load(path)


def test_session_determinism(tiny_fit):
    est, _ = tiny_fit
    rng = np.random.default_rng(0)
    history = rng.normal(size=(20, 4)) * 0.2
    runs = []
    for _ in range(2):
        session = est.session(CFG)
        runs.append([session.step(f).confidence for f in history])
    assert runs[0] == runs[1]
