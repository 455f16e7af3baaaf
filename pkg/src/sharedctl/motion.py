"""Behavior-cloned velocity policy.

An MLP regressed onto optimizer demonstrations maps (gripper position,
grabbed flag, target point[, obstacle geometry]) to a velocity whose
magnitude is bounded by v_max through tanh scaling. The same network
serves as the hindsight oracle: evaluated with the true goal after an
episode, its output is the action the operator "should" have taken.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .env import Action, Phase, Role, WorldConfig, WorldState, clip_speed
from .errors import TrainingError
from .neural import AdamState, Dense, Network, Scale, adam_step, load_weights, mse_loss, save_weights
from .neural.training import clone_weights, grouped_split


def motion_network(n_features: int, hidden: int, v_max: float) -> Network:
    return Network(
        [
            Dense(n_features, hidden, "tanh"),
            Dense(hidden, hidden, "tanh"),
            Dense(hidden, 2, "tanh"),
            Scale(v_max),
        ]
    )


def motion_features(
    pos, grabbed: bool, target, obstacles=()
) -> np.ndarray:
    """Feature vector: position, grabbed flag, target point, then
    (center, radius) per obstacle for the obstacle-aware variant."""
    base = [pos[0], pos[1], 1.0 if grabbed else 0.0, target[0], target[1]]
    for obs in obstacles:
        base.extend((obs[0], obs[1], obs[2]))
    return np.array(base)


def state_features(state: WorldState, goal_id: int, cfg: WorldConfig, obstacles=()) -> np.ndarray:
    if state.phase is Phase.CARRY:
        target = cfg.place_target.center
    else:
        target = state.object_positions[goal_id]
    return motion_features(state.gripper_pos, state.grabbed is not None, target, obstacles)


class MotionPolicy(BaseEstimator):
    """Velocity regressor with sklearn-style fit/predict.

    n_obstacles fixes the feature layout; the obstacle-free variant uses
    n_obstacles=0. fit() takes demo step records as produced by the demo
    dataset reader, split 90/10 by trajectory.
    """

    def __init__(
        self,
        hidden: int = 64,
        v_max: float = 0.4,
        n_obstacles: int = 0,
        lr: float = 1e-3,
        epochs: int = 60,
        batch_size: int = 256,
        val_fraction: float = 0.1,
        seed: int = 0,
    ):
        self.hidden = hidden
        self.v_max = v_max
        self.n_obstacles = n_obstacles
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.val_fraction = val_fraction
        self.seed = seed

    @property
    def n_features_(self) -> int:
        return 5 + 3 * self.n_obstacles

    def _network(self) -> Network:
        return motion_network(self.n_features_, self.hidden, self.v_max)

    def fit(self, records: list[dict], y=None):
        if not records:
            raise TrainingError("empty demonstration dataset")
        feats = []
        targets = []
        groups = []
        for r in records:
            obstacles = r.get("obstacles", [])
            if len(obstacles) != self.n_obstacles:
                raise TrainingError(
                    f"record has {len(obstacles)} obstacles, policy expects {self.n_obstacles}"
                )
            feats.append(motion_features(r["pos"], bool(r["grabbed"]), r["target"], obstacles))
            targets.append(r["velocity"])
            groups.append(r["traj"])
        X = np.asarray(feats)
        Y = np.asarray(targets, dtype=np.float64)
        groups = np.asarray(groups)

        rng = np.random.default_rng(self.seed)
        unique = np.unique(groups)
        train_g, val_g = grouped_split(len(unique), self.val_fraction, rng)
        train_mask = np.isin(groups, unique[train_g])
        Xt, Yt = X[train_mask], Y[train_mask]
        Xv, Yv = X[~train_mask], Y[~train_mask]

        net = self._network()
        weights = net.init_weights(int(rng.integers(2**63)))
        state = AdamState(lr=self.lr)
        best_val = np.inf
        best_weights = clone_weights(weights)
        self.loss_history_ = []
        self.val_history_ = []
        n = Xt.shape[0]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            n_batches = 0
            for lo in range(0, n, self.batch_size):
                idx = order[lo : lo + self.batch_size]
                out, caches = net.forward(weights, Xt[idx])
                loss, dy = mse_loss(out, Yt[idx])
                _, grads = net.backward(weights, caches, dy)
                weights, state = adam_step(weights, grads, state)
                epoch_loss += loss
                n_batches += 1
            self.loss_history_.append(epoch_loss / max(n_batches, 1))
            if Xv.shape[0] > 0:
                val_loss, _ = mse_loss(net.predict(weights, Xv), Yv)
            else:
                val_loss = self.loss_history_[-1]
            self.val_history_.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_weights = clone_weights(weights)
        self.weights_ = best_weights
        self.network_ = net
        self.validation_mse_ = float(best_val)
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("MotionPolicy is not fitted; call fit or load")

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_array(X, dtype=np.float64)
        return self.network_.predict(self.weights_, X)

    def act(self, state: WorldState, goal_id: int, cfg: WorldConfig, obstacles=()) -> Action:
        """Policy action toward the (predicted) goal; role Robot."""
        self._check_fitted()
        x = state_features(state, goal_id, cfg, obstacles)
        v = self.network_.predict(self.weights_, x[None, :])[0]
        return Action(clip_speed((float(v[0]), float(v[1])), self.v_max), Role.ROBOT)

    def hindsight_action(
        self, state: WorldState, true_goal: int, cfg: WorldConfig, obstacles=()
    ) -> Action:
        """Same policy evaluated at the operator's real goal; role Hindsight."""
        a = self.act(state, true_goal, cfg, obstacles)
        return Action(a.v, Role.HINDSIGHT)

    def save(self, path) -> None:
        self._check_fitted()
        save_weights(
            path,
            self.network_.spec_dicts(),
            self.weights_,
            meta={
                "model": "motion",
                "params": self.get_params(),
                "validation_mse": getattr(self, "validation_mse_", None),
            },
        )

    @classmethod
    def load(cls, path) -> "MotionPolicy":
        spec, weights, meta = load_weights(path)
        if meta.get("model") != "motion":
            raise TrainingError(f"{path} does not hold motion weights")
        est = cls(**meta["params"])
        est.network_ = Network.from_spec_dicts(spec)
        est.network_.check_weights(weights)
        est.weights_ = weights
        if meta.get("validation_mse") is not None:
            est.validation_mse_ = meta["validation_mse"]
        return est
