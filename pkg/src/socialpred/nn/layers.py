from __future__ import annotations

import os

import numpy as np

from . import functional as F

DEBUG = bool(os.environ.get("SOCIALPRED_DEBUG"))


class NonFiniteError(FloatingPointError):
    pass


def fan_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """A differentiable block. ``backward`` must follow the matching ``forward``."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def spec(self) -> dict:
        return {"type": type(self).__name__}


class Conv1d(Layer):
    def __init__(self, in_ch: int, out_ch: int, k: int, padding: str = "same", rng=None):
        super().__init__()
        if padding == "same" and k % 2 == 0:
            raise ValueError("'same' padding needs an odd kernel size")
        self.in_ch, self.out_ch, self.k, self.padding = in_ch, out_ch, k, padding
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = fan_uniform(rng, (out_ch, in_ch, k), in_ch * k, out_ch * k)
        self.params["b"] = np.zeros(out_ch)
        self.zero_grad()

    @property
    def pad(self):
        return F.same_padding(self.k) if self.padding == "same" else (0, 0)

    def forward(self, x, train=False, rng=None):
        y, self._cache = F.conv1d(x, self.params["W"], self.params["b"], 1, self.pad)
        return y

    def backward(self, dy):
        dx, dw, db = F.conv1d_grad(self._cache, self.params["W"], dy)
        self.grads["W"] += dw
        self.grads["b"] += db
        return dx

    def spec(self):
        return {"type": "Conv1d", "in_ch": self.in_ch, "out_ch": self.out_ch, "k": self.k, "padding": self.padding}


class ConvTranspose1d(Layer):
    def __init__(self, in_ch: int, out_ch: int, k: int, stride: int = 2, rng=None):
        super().__init__()
        self.in_ch, self.out_ch, self.k, self.stride = in_ch, out_ch, k, stride
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = fan_uniform(rng, (in_ch, out_ch, k), in_ch * k, out_ch * k)
        self.params["b"] = np.zeros(out_ch)
        self.zero_grad()

    def forward(self, x, train=False, rng=None):
        y, self._cache = F.conv_transpose1d(x, self.params["W"], self.params["b"], self.stride)
        return y

    def backward(self, dy):
        dx, dw, db = F.conv_transpose1d_grad(self._cache, self.params["W"], dy)
        self.grads["W"] += dw
        self.grads["b"] += db
        return dx

    def spec(self):
        return {"type": "ConvTranspose1d", "in_ch": self.in_ch, "out_ch": self.out_ch, "k": self.k, "stride": self.stride}


class MaxPool1d(Layer):
    def __init__(self, stride: int = 2):
        super().__init__()
        self.stride = stride

    def forward(self, x, train=False, rng=None):
        y, self._cache = F.maxpool1d(x, self.stride)
        return y

    def backward(self, dy):
        return F.maxpool1d_grad(self._cache, dy)

    def spec(self):
        return {"type": "MaxPool1d", "stride": self.stride}


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return dy * self._mask


class Sigmoid(Layer):
    def forward(self, x, train=False, rng=None):
        self._y = F.sigmoid(x)
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class Dropout(Layer):
    def __init__(self, p: float = 0.25):
        super().__init__()
        self.p = p

    def forward(self, x, train=False, rng=None):
        y, self._mask = F.dropout(x, self.p, train, rng)
        return y

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask

    def spec(self):
        return {"type": "Dropout", "p": self.p}


LAYER_TYPES = {cls.__name__: cls for cls in (Conv1d, ConvTranspose1d, MaxPool1d, ReLU, Sigmoid, Dropout)}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    cls = LAYER_TYPES[spec.pop("type")]
    return cls(**spec)


class Sequential:
    """An ordered stack of layers with flat ``name.param`` access."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train: bool = False, rng=None):
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, train=train, rng=rng)
            if DEBUG and not np.all(np.isfinite(x)):
                raise NonFiniteError(f"non-finite output from layer {i} ({type(layer).__name__})")
        return x

    __call__ = forward

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        own = self.named_params()
        if set(own) != set(params):
            raise ValueError(f"parameter names differ: {sorted(set(own) ^ set(params))}")
        for name, value in params.items():
            if own[name].shape != value.shape:
                raise ValueError(f"{name}: shape {value.shape} != {own[name].shape}")
            i, k = name.split(".")
            self.layers[int(i)].params[k] = np.array(value, dtype=np.float64)
        self.zero_grad()

    def spec(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    @classmethod
    def from_spec(cls, spec) -> "Sequential":
        return cls([layer_from_spec(s) for s in spec])

    def num_params(self) -> int:
        return sum(v.size for v in self.named_params().values())
