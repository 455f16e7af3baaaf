"""Goal intent inference from the operator's command history.

A recurrent network maps the per-step features (gripper position, user
command) to a normalized heatmap over the workspace grid. Per-goal
scores are the heatmap mass inside each object's footprint; summing
scores over a sliding window gives the predicted goal (argmax) and a
confidence (the winner's share of windowed mass).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .env import WorldConfig, WorldState
from .episodes import Episode
from .errors import TrainingError
from .neural import (
    AdamState,
    Dense,
    LSTMCell,
    Network,
    Reshape,
    Softmax2D,
    TransposedConv2D,
    adam_step,
    cross_entropy_map,
    load_weights,
    save_weights,
)
from .neural.training import clone_weights, grouped_split

N_FEATURES = 4
GRID = 28
COARSE = 7


def intent_network(hidden_dim: int = 64) -> Network:
    return Network(
        [
            LSTMCell(N_FEATURES, hidden_dim),
            Dense(hidden_dim, COARSE * COARSE),
            Reshape((1, COARSE, COARSE)),
            TransposedConv2D(1, 8),
            TransposedConv2D(8, 1),
            Reshape((GRID, GRID)),
            Softmax2D(),
        ]
    )


def intent_features(state: WorldState, a_u) -> np.ndarray:
    return np.array(
        [state.gripper_pos[0], state.gripper_pos[1], a_u.v[0], a_u.v[1]]
    )


def goal_cell(point, cfg: WorldConfig) -> tuple[int, int]:
    """(row, col) of the grid cell containing a workspace point."""
    lo, hi = cfg.workspace_min, cfg.workspace_max
    col = int(np.clip((point[0] - lo[0]) / (hi[0] - lo[0]) * GRID, 0, GRID - 1))
    row = int(np.clip((point[1] - lo[1]) / (hi[1] - lo[1]) * GRID, 0, GRID - 1))
    return row, col


def goal_footprints(cfg: WorldConfig) -> np.ndarray:
    """Boolean (n_goals, GRID, GRID): cell centers inside each object square."""
    lo, hi = cfg.workspace_min, cfg.workspace_max
    xs = lo[0] + (np.arange(GRID) + 0.5) / GRID * (hi[0] - lo[0])
    ys = lo[1] + (np.arange(GRID) + 0.5) / GRID * (hi[1] - lo[1])
    cx, cy = np.meshgrid(xs, ys)
    masks = []
    for obj in cfg.goal_objects:
        h = obj.half_extent
        masks.append(
            (np.abs(cx - obj.center[0]) <= h) & (np.abs(cy - obj.center[1]) <= h)
        )
    return np.stack(masks)


def goal_scores(heatmap: np.ndarray, cfg: WorldConfig, footprints=None) -> np.ndarray:
    """Heatmap mass inside each goal object's footprint."""
    if footprints is None:
        footprints = goal_footprints(cfg)
    return np.array([heatmap[m].sum() for m in footprints])


def update_goal_estimate(window, n_goals: int | None = None):
    """(g_star, confidence) from a window of instantaneous score vectors.

    The window holds the last k score vectors (fewer early in an
    episode). All-zero windowed mass degenerates to goal 0 at uniform
    confidence.
    """
    window = list(window)
    if not window:
        raise ValueError("empty score window")
    S = np.sum(window, axis=0)
    total = S.sum()
    if total <= 0.0:
        n = n_goals if n_goals is not None else len(S)
        return 0, 1.0 / n
    g_star = int(np.argmax(S))
    return g_star, float(S[g_star] / total)


def target_blob(cell: tuple[int, int], sigma: float = 1.5) -> np.ndarray:
    rows, cols = np.mgrid[0:GRID, 0:GRID]
    g = np.exp(
        -((rows - cell[0]) ** 2 + (cols - cell[1]) ** 2) / (2.0 * sigma * sigma)
    )
    return g / g.sum()


@dataclass(frozen=True)
class IntentEstimate:
    heatmap: np.ndarray
    scores: tuple[float, ...]
    windowed: tuple[float, ...]
    g_star: int
    confidence: float


class IntentSession:
    """Incremental per-episode evaluation; state starts at zero."""

    def __init__(self, network: Network, weights: dict, cfg: WorldConfig, window: int):
        self._net = network
        self._weights = weights
        self._cell = network.layers[0]
        self._head = Network(network.layers[1:])
        self._h, self._c = self._cell.zero_state()
        self._footprints = goal_footprints(cfg)
        self._window: deque = deque(maxlen=window)
        self._n_goals = len(cfg.goal_objects)

    def step(self, features: np.ndarray) -> IntentEstimate:
        params = {p: self._weights[f"0.{p}"] for p in self._cell.param_shapes()}
        self._h, self._c, _ = self._cell.step(params, np.asarray(features), self._h, self._c)
        head_weights = {
            f"{i}.{p}": self._weights[f"{i + 1}.{p}"]
            for i, layer in enumerate(self._head.layers)
            for p in layer.param_shapes()
        }
        heatmap = self._head.predict(head_weights, self._h[None, :])[0]
        scores = np.array([heatmap[m].sum() for m in self._footprints])
        self._window.append(scores)
        S = np.sum(self._window, axis=0)
        g_star, confidence = update_goal_estimate(self._window, self._n_goals)
        return IntentEstimate(
            heatmap=heatmap,
            scores=tuple(scores),
            windowed=tuple(S),
            g_star=g_star,
            confidence=confidence,
        )


class IntentEstimator(BaseEstimator):
    """Recurrent heatmap model with the training loop attached.

    fit() consumes direct-control episodes labeled with their true goal;
    the per-step target is a normalized Gaussian blob on the true goal's
    grid cell. Episodes are split into train/validation groups and the
    best-validation weights are kept.
    """

    def __init__(
        self,
        hidden_dim: int = 64,
        window: int = 10,
        sigma_cells: float = 1.5,
        lr: float = 3e-3,
        epochs: int = 12,
        val_fraction: float = 0.1,
        seed: int = 0,
    ):
        self.hidden_dim = hidden_dim
        self.window = window
        self.sigma_cells = sigma_cells
        self.lr = lr
        self.epochs = epochs
        self.val_fraction = val_fraction
        self.seed = seed

    def _network(self) -> Network:
        return intent_network(self.hidden_dim)

    def fit(self, episodes: list[Episode], y=None):
        if not episodes:
            raise TrainingError("no episodes to train on")
        if any(ep.true_goal is None for ep in episodes):
            raise TrainingError("every training episode needs a true goal")
        net = self._network()
        rng = np.random.default_rng(self.seed)
        weights = net.init_weights(int(rng.integers(2**63)))

        cfg = episodes[0].config
        blobs = {
            g: target_blob(goal_cell(cfg.goal_objects[g].center, cfg), self.sigma_cells)
            for g in range(len(cfg.goal_objects))
        }
        data = []
        for ep in episodes:
            if not ep.steps:
                continue
            X = np.stack([intent_features(r.state, r.a_u) for r in ep.steps])
            target = np.broadcast_to(
                blobs[ep.true_goal], (X.shape[0], GRID, GRID)
            )
            data.append((X, target))
        if not data:
            raise TrainingError("all episodes empty")

        train_idx, val_idx = grouped_split(len(data), self.val_fraction, rng)
        state = AdamState(lr=self.lr)
        best_val = np.inf
        best_weights = clone_weights(weights)
        self.loss_history_ = []
        self.val_history_ = []
        for _ in range(self.epochs):
            order = rng.permutation(len(train_idx))
            epoch_loss = 0.0
            for j in order:
                X, target = data[train_idx[j]]
                out, caches = net.forward(weights, X)
                loss, dy = cross_entropy_map(out, target)
                _, grads = net.backward(weights, caches, dy)
                weights, state = adam_step(weights, grads, state)
                epoch_loss += loss
            self.loss_history_.append(epoch_loss / len(train_idx))
            if len(val_idx) > 0:
                val_loss = 0.0
                for i in val_idx:
                    X, target = data[i]
                    loss, _ = cross_entropy_map(net.predict(weights, X), target)
                    val_loss += loss
                val_loss /= len(val_idx)
            else:
                val_loss = self.loss_history_[-1]
            self.val_history_.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_weights = clone_weights(weights)
        self.weights_ = best_weights
        self.network_ = net
        self.best_val_loss_ = float(best_val)
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("IntentEstimator is not fitted; call fit or load")

    def predict_heatmap(self, history: np.ndarray) -> np.ndarray:
        """Full-sequence evaluation; history is (T, 4) features."""
        self._check_fitted()
        history = np.asarray(history, dtype=np.float64)
        if history.ndim != 2 or history.shape[0] < 1:
            raise ValueError(f"history must be (T, {N_FEATURES}), got {history.shape}")
        return self.network_.predict(self.weights_, history)

    def session(self, cfg: WorldConfig) -> IntentSession:
        self._check_fitted()
        return IntentSession(self.network_, self.weights_, cfg, self.window)

    def save(self, path) -> None:
        self._check_fitted()
        save_weights(
            path,
            self.network_.spec_dicts(),
            self.weights_,
            meta={"model": "intent", "params": self.get_params()},
        )

    @classmethod
    def load(cls, path) -> "IntentEstimator":
        spec, weights, meta = load_weights(path)
        if meta.get("model") != "intent":
            raise TrainingError(f"{path} does not hold intent weights")
        est = cls(**meta["params"])
        est.network_ = Network.from_spec_dicts(spec)
        est.network_.check_weights(weights)
        est.weights_ = weights
        return est
