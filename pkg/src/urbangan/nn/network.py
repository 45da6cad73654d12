"""A fixed chain of layers with named parameters."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import StateError
from .layers import Layer, LayerSpec, Parameter, make_layer


class Network:
    def __init__(self, layers: Iterable[Layer]):
        self.layers = list(layers)

    @classmethod
    def from_specs(cls, specs: Iterable[LayerSpec]) -> "Network":
        return cls(make_layer(s) for s in specs)

    def specs(self) -> list[LayerSpec]:
        return [layer.spec() for layer in self.layers]

    def init_params(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init_params(rng)

    def named_parameters(self) -> dict[str, Parameter]:
        return {f"{i}.{name}": p for i, layer in enumerate(self.layers) for name, p in layer.params.items()}

    def named_buffers(self) -> dict[str, np.ndarray]:
        return {f"{i}.{name}": b for i, layer in enumerate(self.layers) for name, b in layer.buffers.items()}

    def forward(self, x: np.ndarray, train: bool = True):
        ctxs = []
        for layer in self.layers:
            x, ctx = layer.forward(x, train)
            ctxs.append(ctx)
        return x, ctxs

    def __call__(self, x, train: bool = True) -> np.ndarray:
        return self.forward(x, train)[0]

    def backward(self, dout: np.ndarray, ctxs) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        if not isinstance(ctxs, list) or len(ctxs) != len(self.layers):
            raise StateError("network backward needs the context list from a matching forward call")
        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            dout, g = self.layers[i].backward(dout, ctxs[i])
            for name, v in g.items():
                grads[f"{i}.{name}"] = v
        return dout, grads

    def __repr__(self):
        return "Network(\n" + "".join(f"  {i}: {l!r}\n" for i, l in enumerate(self.layers)) + ")"
