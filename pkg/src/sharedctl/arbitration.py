"""Policy blending and arbitration.

Two blending rules combine the user command a_u with the autonomous
command a_r into the executed shared command a_s:

* linear:      a_s = alpha * a_r + (1 - alpha) * a_u
* rotational:  a_s = R(alpha * theta_ur) a_u  -- the user keeps authority
  over speed and is only steered toward the autonomous direction.

The hindsight arbitration label inverts the rotational blend: given the
action the autonomous policy would have taken toward the true goal (the
hindsight action a_h), it recovers the rotation fraction that would have
turned a_u into a_h, clipped to [0, 1] when a_h falls outside the cone
spanned by a_u and a_r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .env import Action, Role, clip_speed
from .errors import DegenerateInputError, TrainingError
from .neural import (
    AdamState,
    Dense,
    LSTMCell,
    Network,
    adam_step,
    load_weights,
    mse_loss,
    save_weights,
)
from .neural.training import clone_weights, grouped_split

VECTOR_TOL = 1e-9


@dataclass(frozen=True)
class AlphaValue:
    """Arbitration weight in [0, 1]; degenerate marks ill-defined geometry."""

    alpha: float
    degenerate: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha outside [0, 1]: {self.alpha}")


@dataclass(frozen=True)
class TimidParams:
    """Hand-crafted confidence-to-alpha ramp: assist only when confident."""

    c_lo: float = 0.55
    c_hi: float = 0.85
    alpha_max: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.c_lo < self.c_hi <= 1.0:
            raise ValueError(f"require 0 <= c_lo < c_hi <= 1, got {self.c_lo}, {self.c_hi}")
        if not 0.0 <= self.alpha_max <= 1.0:
            raise ValueError(f"alpha_max outside [0, 1]: {self.alpha_max}")


def _check_alpha(alpha: float) -> float:
    if not (isinstance(alpha, (int, float)) and 0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    return float(alpha)


def rotate(v: tuple[float, float], theta: float) -> tuple[float, float]:
    c, s = math.cos(theta), math.sin(theta)
    return (c * v[0] - s * v[1], s * v[0] + c * v[1])


def signed_angle(a, b, tol: float = VECTOR_TOL) -> float:
    """Angle rotating a onto b's direction, counterclockwise positive.

    Result lies in (-pi, pi] with the convention that exactly opposed
    vectors map to +pi. Accepts Actions or 2-vectors.
    """
    ax, ay = _vec(a)
    bx, by = _vec(b)
    if math.hypot(ax, ay) <= tol or math.hypot(bx, by) <= tol:
        raise DegenerateInputError("signed_angle needs vectors of nonzero length")
    angle = math.atan2(ax * by - ay * bx, ax * bx + ay * by)
    if angle == -math.pi:
        angle = math.pi
    return angle


def _vec(a) -> tuple[float, float]:
    if isinstance(a, Action):
        return a.v
    return (float(a[0]), float(a[1]))


def blend_linear(a_u: Action, a_r: Action, alpha: float, v_max: float) -> Action:
    """Convex combination of the two commands, clipped to v_max."""
    alpha = _check_alpha(alpha)
    v = (
        alpha * a_r.v[0] + (1.0 - alpha) * a_u.v[0],
        alpha * a_r.v[1] + (1.0 - alpha) * a_u.v[1],
    )
    return Action(clip_speed(v, v_max), Role.SHARED)


def blend_rotational(a_u: Action, a_r: Action, alpha: float, tol: float = VECTOR_TOL) -> Action:
    """Rotate a_u a fraction alpha of the way toward a_r's direction.

    The result keeps the user's speed exactly. With no user motion there
    is nothing to steer (returns a_u); with no autonomous direction there
    is nothing to steer toward (returns a_u).
    """
    alpha = _check_alpha(alpha)
    if math.hypot(*a_u.v) <= tol or math.hypot(*a_r.v) <= tol:
        return Action(a_u.v, Role.SHARED)
    phi = signed_angle(a_u, a_r, tol)
    return Action(rotate(a_u.v, alpha * phi), Role.SHARED)


def hindsight_alpha(a_u: Action, a_r: Action, a_h: Action, tol: float = VECTOR_TOL) -> AlphaValue:
    """Arbitration that would have steered a_u to the hindsight action a_h.

    With phi the signed angle a_u -> a_r and psi the signed angle
    a_u -> a_h, the label is clamp(psi / phi, 0, 1): the ratio of angles
    when a_h lies between a_u and a_r, 0 when a_h falls outside on the
    user's side, 1 when it falls outside on the autonomous side. Collinear
    a_u and a_r (or any near-zero vector) make the rotation direction
    meaningless: those samples are flagged degenerate with alpha 0.
    """
    if (
        math.hypot(*a_u.v) <= tol
        or math.hypot(*a_r.v) <= tol
        or math.hypot(*a_h.v) <= tol
    ):
        return AlphaValue(0.0, degenerate=True)
    phi = signed_angle(a_u, a_r, tol)
    if abs(phi) <= tol:
        return AlphaValue(0.0, degenerate=True)
    psi = signed_angle(a_u, a_h, tol)
    ratio = psi / phi
    return AlphaValue(min(1.0, max(0.0, ratio)))


def timid_alpha(confidence: float, params: TimidParams = TimidParams()) -> AlphaValue:
    """Piecewise-linear ramp from confidence to arbitration weight."""
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence outside [0, 1]: {confidence}")
    ramp = (confidence - params.c_lo) / (params.c_hi - params.c_lo)
    return AlphaValue(params.alpha_max * min(1.0, max(0.0, ramp)))


# ---------------------------------------------------------------------------
# Learned arbitration: recurrent net from per-step context to alpha.
# ---------------------------------------------------------------------------


def arb_network(n_features: int, hidden: int = 32) -> Network:
    return Network([LSTMCell(n_features, hidden), Dense(hidden, 1, "sigmoid")])


def arb_features(pos, a_u: Action, a_r: Action, windowed, confidence: float, grabbed: bool) -> np.ndarray:
    """Per-step context vector: position, both commands, windowed goal
    scores, confidence, grabbed flag. Feature count is 8 + |goals|."""
    return np.array(
        [
            pos[0],
            pos[1],
            a_u.v[0],
            a_u.v[1],
            a_r.v[0],
            a_r.v[1],
            *windowed,
            confidence,
            1.0 if grabbed else 0.0,
        ]
    )


class ArbSession:
    """Incremental per-episode alpha prediction; state starts at zero."""

    def __init__(self, network: Network, weights: dict):
        self._cell = network.layers[0]
        self._dense = network.layers[1]
        self._weights = weights
        self._h, self._c = self._cell.zero_state()

    def step(self, features: np.ndarray) -> AlphaValue:
        cell_params = {p: self._weights[f"0.{p}"] for p in self._cell.param_shapes()}
        self._h, self._c, _ = self._cell.step(
            cell_params, np.asarray(features), self._h, self._c
        )
        dense_params = {p: self._weights[f"1.{p}"] for p in self._dense.param_shapes()}
        out, _ = self._dense.forward(dense_params, self._h[None, :])
        return AlphaValue(float(out[0, 0]))


class ArbitrationEstimator(BaseEstimator):
    """Recurrent alpha regressor trained on hindsight-labeled sequences.

    fit() takes per-episode (features, targets, mask) triples; masked-out
    steps (degenerate hindsight geometry) stay in the sequence for the
    recurrence but contribute nothing to the squared-error loss. Passing
    init_weights warm-starts from an earlier model in the lineage.
    """

    def __init__(
        self,
        n_goals: int = 4,
        hidden: int = 32,
        lr: float = 3e-3,
        epochs: int = 20,
        val_fraction: float = 0.1,
        seed: int = 0,
    ):
        self.n_goals = n_goals
        self.hidden = hidden
        self.lr = lr
        self.epochs = epochs
        self.val_fraction = val_fraction
        self.seed = seed

    @property
    def n_features_(self) -> int:
        return 8 + self.n_goals

    def _network(self) -> Network:
        return arb_network(self.n_features_, self.hidden)

    def fit(self, sequences, y=None, init_weights: dict | None = None):
        sequences = [
            (np.asarray(X, dtype=np.float64), np.asarray(t, dtype=np.float64), np.asarray(m))
            for X, t, m in sequences
            if len(t) > 0
        ]
        if not sequences:
            raise TrainingError("no arbitration sequences to train on")
        for X, t, m in sequences:
            if X.shape[1] != self.n_features_:
                raise TrainingError(
                    f"sequence has {X.shape[1]} features, expected {self.n_features_}"
                )
            if t.min() < 0.0 or t.max() > 1.0:
                raise TrainingError("alpha targets outside [0, 1]")
        net = self._network()
        rng = np.random.default_rng(self.seed)
        if init_weights is not None:
            net.check_weights(init_weights)
            weights = clone_weights(init_weights)
        else:
            weights = net.init_weights(int(rng.integers(2**63)))

        train_idx, val_idx = grouped_split(len(sequences), self.val_fraction, rng)
        state = AdamState(lr=self.lr)
        best_val = np.inf
        best_weights = clone_weights(weights)
        self.loss_history_ = []
        self.val_history_ = []
        for _ in range(self.epochs):
            order = rng.permutation(len(train_idx))
            epoch_loss = 0.0
            for j in order:
                X, t, m = sequences[train_idx[j]]
                out, caches = net.forward(weights, X)
                loss, dy = mse_loss(out, t[:, None], m)
                _, grads = net.backward(weights, caches, dy)
                weights, state = adam_step(weights, grads, state)
                epoch_loss += loss
            self.loss_history_.append(epoch_loss / len(train_idx))
            if len(val_idx) > 0:
                val_loss = 0.0
                for i in val_idx:
                    X, t, m = sequences[i]
                    loss, _ = mse_loss(net.predict(weights, X), t[:, None], m)
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
            raise NotFittedError("ArbitrationEstimator is not fitted; call fit or load")

    def predict_sequence(self, X) -> np.ndarray:
        """Full-sequence alpha predictions for a (T, n_features) history."""
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        return self.network_.predict(self.weights_, X)[:, 0]

    def session(self) -> ArbSession:
        self._check_fitted()
        return ArbSession(self.network_, self.weights_)

    def save(self, path) -> None:
        self._check_fitted()
        save_weights(
            path,
            self.network_.spec_dicts(),
            self.weights_,
            meta={"model": "arbitration", "params": self.get_params()},
        )

    @classmethod
    def load(cls, path) -> "ArbitrationEstimator":
        spec, weights, meta = load_weights(path)
        if meta.get("model") != "arbitration":
            raise TrainingError(f"{path} does not hold arbitration weights")
        est = cls(**meta["params"])
        est.network_ = Network.from_spec_dicts(spec)
        est.network_.check_weights(weights)
        est.weights_ = weights
        return est
