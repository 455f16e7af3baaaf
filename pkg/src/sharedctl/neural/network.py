"""Layer stack with named parameters and exact backprop."""

from __future__ import annotations

import numpy as np

from ..errors import SpecMismatchError
from .layers import layer_from_dict, layer_to_dict


class Network:
    """An ordered stack of layers sharing one flat, named weight dict.

    Parameter names are "<layer_index>.<param>" so two architectures with
    the same layer types in the same order share names, and a weight dict
    can be checked against a spec. Weights always live in the dict passed
    around explicitly; the Network object itself is immutable apart from
    holding the layer specs.
    """

    def __init__(self, layers):
        self.layers = tuple(layers)

    def spec_dicts(self) -> list[dict]:
        return [layer_to_dict(layer) for layer in self.layers]

    @classmethod
    def from_spec_dicts(cls, dicts) -> "Network":
        return cls([layer_from_dict(d) for d in dicts])

    def param_names(self) -> list[str]:
        names = []
        for i, layer in enumerate(self.layers):
            names.extend(f"{i}.{p}" for p in layer.param_shapes())
        return names

    def init_weights(self, seed: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        weights: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            for pname, arr in layer.init_params(rng).items():
                weights[f"{i}.{pname}"] = arr
        return weights

    def check_weights(self, weights: dict[str, np.ndarray]) -> None:
        expected = {
            f"{i}.{p}": shape
            for i, layer in enumerate(self.layers)
            for p, shape in layer.param_shapes().items()
        }
        if set(weights) != set(expected):
            raise SpecMismatchError(
                f"weight names {sorted(weights)} do not match spec {sorted(expected)}"
            )
        for name, shape in expected.items():
            if tuple(weights[name].shape) != tuple(shape):
                raise SpecMismatchError(
                    f"{name}: expected shape {shape}, got {weights[name].shape}"
                )

    def _layer_params(self, weights, i):
        layer = self.layers[i]
        return {p: weights[f"{i}.{p}"] for p in layer.param_shapes()}

    def forward(self, weights: dict[str, np.ndarray], x: np.ndarray):
        """Run the stack; returns (output, caches) for a later backward."""
        caches = []
        out = np.asarray(x, dtype=np.float64)
        for i, layer in enumerate(self.layers):
            out, cache = layer.forward(self._layer_params(weights, i), out)
            caches.append(cache)
        return out, caches

    def backward(self, weights: dict[str, np.ndarray], caches, dy: np.ndarray):
        """Backpropagate dLoss/dOutput; returns (dx, named gradients)."""
        if len(caches) != len(self.layers):
            raise SpecMismatchError("cache does not match network depth")
        grads: dict[str, np.ndarray] = {}
        d = dy
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            d, layer_grads = layer.backward(self._layer_params(weights, i), caches[i], d)
            for pname, g in layer_grads.items():
                grads[f"{i}.{pname}"] = g
        return d, grads

    def predict(self, weights: dict[str, np.ndarray], x: np.ndarray) -> np.ndarray:
        out, _ = self.forward(weights, x)
        return out
