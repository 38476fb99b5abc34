"""Dense-tensor numerical core: layers, backprop, softmax and Adam.

Everything operates on float64 numpy arrays. Networks are small on purpose;
clarity and bit-reproducibility matter more than speed at this scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ConfigurationError, DimensionError, StateError

DTYPE = np.float64


def as_batch(x, name: str = "batch") -> np.ndarray:
    """Coerce to a 2-D float64 array of shape (batch, features)."""
    arr = np.asarray(x, dtype=DTYPE)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D (batch, features), got shape {arr.shape}")
    return arr


class Layer:
    """Base layer: named parameter arrays plus matching gradient slots.

    Gradients are overwritten (not accumulated) on every backward call.
    The forward activation cache is consumed by backward, so each backward
    must be preceded by its own forward.
    """

    kind = "base"

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"backward on layer '{self.name}' without a preceding forward")
        cache, self._cache = self._cache, None
        return cache


class Dense(Layer):
    """Affine map: out = x @ w + b, with w shaped (fan_in, fan_out)."""

    kind = "dense"

    def __init__(self, name: str, fan_in: int, fan_out: int, rng: np.random.Generator | None = None):
        super().__init__(name)
        if rng is None:
            w = np.zeros((fan_in, fan_out), dtype=DTYPE)
        else:
            # Xavier-uniform keeps activations O(1) regardless of width.
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        self.params = {"w": w, "b": np.zeros(fan_out, dtype=DTYPE)}
        self.grads = {"w": np.zeros_like(w), "b": np.zeros(fan_out, dtype=DTYPE)}

    def forward(self, x: np.ndarray) -> np.ndarray:
        w = self.params["w"]
        if x.ndim != 2 or x.shape[1] != w.shape[0]:
            raise DimensionError(
                f"layer '{self.name}' expects input (batch, {w.shape[0]}), got {x.shape}"
            )
        self._cache = x
        return x @ w + self.params["b"]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x = self._take_cache()
        self.grads["w"] = x.T @ grad_out
        self.grads["b"] = grad_out.sum(axis=0)
        return grad_out @ self.params["w"].T


class ReLU(Layer):
    kind = "relu"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x > 0.0
        return np.where(self._cache, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        mask = self._take_cache()
        if mask.shape != grad_out.shape:
            raise DimensionError(
                f"layer '{self.name}' got gradient {grad_out.shape}, expected {mask.shape}"
            )
        return np.where(mask, grad_out, 0.0)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        shape = self._take_cache()
        return grad_out.reshape(shape)


class Conv2DSmall(Layer):
    """Small 2-D convolution: stride 1, valid padding, square kernel.

    Accepts flat (batch, channels*h*w) or 4-D (batch, channels, h, w) input
    and emits (batch, filters, h-k+1, w-k+1). Meant for desk-scale image-ish
    inputs; no performance engineering.
    """

    kind = "conv2d-small"

    def __init__(self, name: str, in_shape: tuple[int, int, int], filters: int,
                 kernel: int = 3, rng: np.random.Generator | None = None):
        super().__init__(name)
        c, h, w = in_shape
        if kernel > min(h, w):
            raise ConfigurationError(
                f"layer '{self.name}': kernel {kernel} exceeds input side {min(h, w)}"
            )
        self.in_shape = (c, h, w)
        self.kernel = kernel
        fan_in = c * kernel * kernel
        fan_out = filters * kernel * kernel
        if rng is None:
            f = np.zeros((filters, c, kernel, kernel), dtype=DTYPE)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            f = rng.uniform(-limit, limit, size=(filters, c, kernel, kernel))
        self.params = {"w": f, "b": np.zeros(filters, dtype=DTYPE)}
        self.grads = {"w": np.zeros_like(f), "b": np.zeros(filters, dtype=DTYPE)}

    def _to_4d(self, x: np.ndarray) -> np.ndarray:
        c, h, w = self.in_shape
        if x.ndim == 2:
            if x.shape[1] != c * h * w:
                raise DimensionError(
                    f"layer '{self.name}' expects {c * h * w} flat features, got {x.shape[1]}"
                )
            return x.reshape(x.shape[0], c, h, w)
        if x.ndim == 4 and x.shape[1:] == (c, h, w):
            return x
        raise DimensionError(f"layer '{self.name}' cannot take input of shape {x.shape}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        x4 = self._to_4d(x)
        k = self.kernel
        # windows: (b, c, oh, ow, k, k)
        windows = sliding_window_view(x4, (k, k), axis=(2, 3))
        self._cache = windows
        out = np.einsum("bcijkl,fckl->bfij", windows, self.params["w"])
        return out + self.params["b"][None, :, None, None]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        windows = self._take_cache()
        k = self.kernel
        c, h, w = self.in_shape
        b = grad_out.shape[0]
        oh, ow = h - k + 1, w - k + 1
        self.grads["w"] = np.einsum("bcijkl,bfij->fckl", windows, grad_out)
        self.grads["b"] = grad_out.sum(axis=(0, 2, 3))
        dx = np.zeros((b, c, h, w), dtype=DTYPE)
        filt = self.params["w"]
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + oh, j:j + ow] += np.einsum(
                    "bfij,fc->bcij", grad_out, filt[:, :, i, j]
                )
        return dx


class Model:
    """Ordered layer stack with cached-activation backprop.

    forward is a pure function of (parameters, batch); backward fills every
    layer's grads from d(loss)/d(logits) and must follow a forward on the
    same batch.
    """

    def __init__(self, layers: list[Layer], arch_id: str):
        self.layers = list(layers)
        self.arch_id = arch_id
        self._out_shape = None

    def forward(self, batch) -> np.ndarray:
        x = as_batch(batch)
        for layer in self.layers:
            x = layer.forward(x)
        self._out_shape = x.shape
        return x

    def backward(self, loss_grad) -> None:
        if self._out_shape is None:
            raise StateError("backward called before any forward on this model")
        g = np.asarray(loss_grad, dtype=DTYPE)
        if g.shape != self._out_shape:
            raise DimensionError(
                f"loss gradient shape {g.shape} does not match logits shape {self._out_shape}"
            )
        self._out_shape = None
        for layer in reversed(self.layers):
            g = layer.backward(g)

    def named_parameters(self):
        """Yield (key, array) pairs in a fixed order ('layer.param')."""
        for layer in self.layers:
            for pname, arr in layer.params.items():
                yield f"{layer.name}.{pname}", arr

    def named_gradients(self):
        for layer in self.layers:
            for pname, arr in layer.grads.items():
                yield f"{layer.name}.{pname}", arr

    def parameter_count(self) -> int:
        return sum(arr.size for _, arr in self.named_parameters())

    def get_flat_params(self) -> np.ndarray:
        parts = [arr.ravel() for _, arr in self.named_parameters()]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=DTYPE)

    def set_flat_params(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=DTYPE)
        if vec.size != self.parameter_count():
            raise DimensionError(
                f"flat vector has {vec.size} entries, model has {self.parameter_count()}"
            )
        offset = 0
        for layer in self.layers:
            for pname, arr in layer.params.items():
                arr[...] = vec[offset:offset + arr.size].reshape(arr.shape)
                offset += arr.size

    def get_flat_grads(self) -> np.ndarray:
        parts = [arr.ravel() for _, arr in self.named_gradients()]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=DTYPE)

    def copy(self) -> "Model":
        import copy as _copy

        return _copy.deepcopy(self)


def softmax(logits) -> np.ndarray:
    """Row-wise softmax, stabilized by max-subtraction.

    Rows of the result are non-negative and sum to 1 within 1e-12; adding a
    constant to a logits row leaves its softmax unchanged.
    """
    z = as_batch(logits, "logits")
    if z.shape[1] < 2:
        raise DimensionError(f"softmax needs at least 2 classes, got {z.shape[1]}")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class AdamState:
    """Adam moments for one model. t increases by exactly 1 per step."""

    alpha: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: Model, alpha: float = 0.001, beta1: float = 0.9,
                  beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(alpha=alpha, beta1=beta1, beta2=beta2, eps=eps)
        for key, arr in model.named_parameters():
            state.m[key] = np.zeros_like(arr)
            state.v[key] = np.zeros_like(arr)
        return state


def adam_step(model: Model, state: AdamState) -> None:
    """One bias-corrected Adam update of every model parameter, in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for layer in model.layers:
        for pname, param in layer.params.items():
            key = f"{layer.name}.{pname}"
            if key not in state.m or state.m[key].shape != param.shape:
                raise ConfigurationError(
                    f"optimizer state does not match model parameter '{key}'"
                )
            g = layer.grads[pname]
            if g.shape != param.shape:
                raise ConfigurationError(
                    f"gradient shape {g.shape} does not match parameter '{key}' {param.shape}"
                )
            m = state.m[key]
            v = state.v[key]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * np.square(g)
            param -= state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
