"""Layer definitions: forward passes plus hand-derived backward passes.

Every layer treats the leading axis of its input as the batch/time axis.
`forward` returns the output and an opaque cache; `backward` consumes the
cache and the upstream gradient and returns the input gradient plus a
dict of parameter gradients. LSTMCell additionally exposes `step` for
incremental (stateful) evaluation; running `step` over a sequence gives
the same result as `forward` on the stacked sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SpecMismatchError

_ACTIVATIONS = ("linear", "tanh", "sigmoid", "relu")


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    raise SpecMismatchError(f"unknown activation {name!r}")


def _activation_grad(name: str, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return np.ones_like(y)
    if name == "tanh":
        return 1.0 - y * y
    if name == "sigmoid":
        return y * (1.0 - y)
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    raise SpecMismatchError(f"unknown activation {name!r}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise SpecMismatchError(f"unknown activation {self.activation!r}")

    def param_shapes(self):
        return {"W": (self.in_dim, self.out_dim), "b": (self.out_dim,)}

    def init_params(self, rng):
        return {
            "W": _uniform_fan_in(rng, self.in_dim, (self.in_dim, self.out_dim)),
            "b": np.zeros(self.out_dim),
        }

    def forward(self, params, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise SpecMismatchError(
                f"Dense expects (N, {self.in_dim}), got {x.shape}"
            )
        z = x @ params["W"] + params["b"]
        y = _apply_activation(self.activation, z)
        return y, (x, z, y)

    def backward(self, params, cache, dy):
        x, z, y = cache
        dz = dy * _activation_grad(self.activation, y, z)
        grads = {"W": x.T @ dz, "b": dz.sum(axis=0)}
        dx = dz @ params["W"].T
        return dx, grads


@dataclass(frozen=True)
class LSTMCell:
    """Single-layer LSTM run over a (T, in_dim) sequence.

    Gate order along the stacked 4H axis is input, forget, cell, output.
    The recurrent state starts at zero for every sequence.
    """

    in_dim: int
    hidden_dim: int

    def param_shapes(self):
        h = self.hidden_dim
        return {"W": (self.in_dim, 4 * h), "U": (h, 4 * h), "b": (4 * h,)}

    def init_params(self, rng):
        h = self.hidden_dim
        return {
            "W": _uniform_fan_in(rng, self.in_dim, (self.in_dim, 4 * h)),
            "U": _uniform_fan_in(rng, h, (h, 4 * h)),
            "b": np.zeros(4 * h),
        }

    def zero_state(self):
        return np.zeros(self.hidden_dim), np.zeros(self.hidden_dim)

    def step(self, params, x_t, h, c):
        """One recurrent step; returns (h', c', step_cache)."""
        hdim = self.hidden_dim
        z = x_t @ params["W"] + h @ params["U"] + params["b"]
        i = _sigmoid(z[:hdim])
        f = _sigmoid(z[hdim : 2 * hdim])
        g = np.tanh(z[2 * hdim : 3 * hdim])
        o = _sigmoid(z[3 * hdim :])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        return h_new, c_new, (x_t, h, c, i, f, g, o, tanh_c)

    def forward(self, params, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise SpecMismatchError(
                f"LSTMCell expects (T, {self.in_dim}), got {x.shape}"
            )
        T = x.shape[0]
        h, c = self.zero_state()
        hs = np.empty((T, self.hidden_dim))
        caches = []
        for t in range(T):
            h, c, cache = self.step(params, x[t], h, c)
            hs[t] = h
            caches.append(cache)
        return hs, caches

    def backward(self, params, caches, dh_seq):
        T = len(caches)
        hdim = self.hidden_dim
        dW = np.zeros_like(params["W"])
        dU = np.zeros_like(params["U"])
        db = np.zeros_like(params["b"])
        dx = np.empty((T, self.in_dim))
        dh_next = np.zeros(hdim)
        dc_next = np.zeros(hdim)
        for t in range(T - 1, -1, -1):
            x_t, h_prev, c_prev, i, f, g, o, tanh_c = caches[t]
            dh = dh_seq[t] + dh_next
            do = dh * tanh_c
            dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ]
            )
            dW += np.outer(x_t, dz)
            dU += np.outer(h_prev, dz)
            db += dz
            dx[t] = params["W"] @ dz
            dh_next = params["U"] @ dz
        return dx, {"W": dW, "U": dU, "b": db}


@dataclass(frozen=True)
class TransposedConv2D:
    """Stride-s transposed convolution (upsampling), square kernel."""

    in_channels: int
    out_channels: int
    kernel: int = 4
    stride: int = 2
    padding: int = 1

    def out_size(self, size: int) -> int:
        return (size - 1) * self.stride - 2 * self.padding + self.kernel

    def param_shapes(self):
        k = self.kernel
        return {
            "W": (self.in_channels, self.out_channels, k, k),
            "b": (self.out_channels,),
        }

    def init_params(self, rng):
        k = self.kernel
        fan_in = self.in_channels * k * k
        return {
            "W": _uniform_fan_in(
                rng, fan_in, (self.in_channels, self.out_channels, k, k)
            ),
            "b": np.zeros(self.out_channels),
        }

    def forward(self, params, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise SpecMismatchError(
                f"TransposedConv2D expects (N, {self.in_channels}, H, W), got {x.shape}"
            )
        n, _, hin, win = x.shape
        k, s, p = self.kernel, self.stride, self.padding
        w = params["W"]
        full = np.zeros((n, self.out_channels, (hin - 1) * s + k, (win - 1) * s + k))
        for ki in range(k):
            for kj in range(k):
                # (N, H, W, C_out) contribution of kernel tap (ki, kj)
                contrib = np.tensordot(x, w[:, :, ki, kj], axes=([1], [0]))
                full[
                    :, :, ki : ki + (hin - 1) * s + 1 : s, kj : kj + (win - 1) * s + 1 : s
                ] += np.moveaxis(contrib, 3, 1)
        hout, wout = self.out_size(hin), self.out_size(win)
        y = full[:, :, p : p + hout, p : p + wout] + params["b"][None, :, None, None]
        return y, (x, full.shape)

    def backward(self, params, cache, dy):
        x, full_shape = cache
        n, _, hin, win = x.shape
        k, s, p = self.kernel, self.stride, self.padding
        w = params["W"]
        dfull = np.zeros(full_shape)
        hout, wout = self.out_size(hin), self.out_size(win)
        dfull[:, :, p : p + hout, p : p + wout] = dy
        dx = np.zeros_like(x)
        dW = np.zeros_like(w)
        for ki in range(k):
            for kj in range(k):
                sub = dfull[
                    :, :, ki : ki + (hin - 1) * s + 1 : s, kj : kj + (win - 1) * s + 1 : s
                ]
                # dx: fold the tap's output gradient back through its weights
                dx += np.moveaxis(np.tensordot(sub, w[:, :, ki, kj], axes=([1], [1])), 3, 1)
                dW[:, :, ki, kj] = np.tensordot(x, sub, axes=([0, 2, 3], [0, 2, 3]))
        db = dy.sum(axis=(0, 2, 3))
        return dx, {"W": dW, "b": db}


@dataclass(frozen=True)
class Softmax2D:
    """Normalizes each sample's map to a distribution (all trailing axes)."""

    def param_shapes(self):
        return {}

    def init_params(self, rng):
        return {}

    def forward(self, params, x):
        axes = tuple(range(1, x.ndim))
        shifted = x - x.max(axis=axes, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axes, keepdims=True)
        return y, y

    def backward(self, params, cache, dy):
        y = cache
        axes = tuple(range(1, y.ndim))
        inner = (y * dy).sum(axis=axes, keepdims=True)
        return y * (dy - inner), {}


@dataclass(frozen=True)
class Sigmoid:
    def param_shapes(self):
        return {}

    def init_params(self, rng):
        return {}

    def forward(self, params, x):
        y = _sigmoid(x)
        return y, y

    def backward(self, params, cache, dy):
        y = cache
        return dy * y * (1.0 - y), {}


@dataclass(frozen=True)
class Tanh:
    def param_shapes(self):
        return {}

    def init_params(self, rng):
        return {}

    def forward(self, params, x):
        y = np.tanh(x)
        return y, y

    def backward(self, params, cache, dy):
        y = cache
        return dy * (1.0 - y * y), {}


@dataclass(frozen=True)
class Reshape:
    """Per-sample reshape; the leading batch axis is untouched."""

    shape: tuple[int, ...]

    def param_shapes(self):
        return {}

    def init_params(self, rng):
        return {}

    def forward(self, params, x):
        n = x.shape[0]
        try:
            y = x.reshape((n,) + tuple(self.shape))
        except ValueError as exc:
            raise SpecMismatchError(
                f"cannot reshape {x.shape} to (N, {self.shape})"
            ) from exc
        return y, x.shape

    def backward(self, params, cache, dy):
        return dy.reshape(cache), {}


@dataclass(frozen=True)
class Scale:
    factor: float

    def param_shapes(self):
        return {}

    def init_params(self, rng):
        return {}

    def forward(self, params, x):
        return x * self.factor, None

    def backward(self, params, cache, dy):
        return dy * self.factor, {}


_LAYER_TYPES = {
    "dense": Dense,
    "lstm": LSTMCell,
    "tconv2d": TransposedConv2D,
    "softmax2d": Softmax2D,
    "sigmoid": Sigmoid,
    "tanh": Tanh,
    "reshape": Reshape,
    "scale": Scale,
}
_TYPE_NAMES = {cls: name for name, cls in _LAYER_TYPES.items()}


def layer_to_dict(layer) -> dict:
    d = {"type": _TYPE_NAMES[type(layer)]}
    for fname in layer.__dataclass_fields__:
        value = getattr(layer, fname)
        d[fname] = list(value) if isinstance(value, tuple) else value
    return d


def layer_from_dict(d: dict):
    kind = d.get("type")
    if kind not in _LAYER_TYPES:
        raise SpecMismatchError(f"unknown layer type {kind!r}")
    cls = _LAYER_TYPES[kind]
    kwargs = {k: v for k, v in d.items() if k != "type"}
    if cls is Reshape and "shape" in kwargs:
        kwargs["shape"] = tuple(kwargs["shape"])
    return cls(**kwargs)
