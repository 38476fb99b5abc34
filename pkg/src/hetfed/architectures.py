"""Architecture registry: small heterogeneous networks for the client zoo.

The four built-in MLP variants differ in depth and width (and therefore in
parameter count), which is the property the protocol cares about. A small
convolutional spec is available for square inputs but is not part of the
default zoo.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .nn import Conv2DSmall, Dense, Flatten, Model, ReLU

# Hidden-layer widths of the built-in zoo, in registration order.
ZOO_HIDDEN: dict[str, tuple[int, ...]] = {
    "mlp-shallow": (64,),
    "mlp-deep": (64, 64, 64),
    "mlp-wide": (256,),
    "mlp-pyramid": (128, 64, 32),
}

_MLP_ID = re.compile(r"mlp(-\d+)+$")


@dataclass(frozen=True)
class ArchitectureSpec:
    """Layer plan for one architecture; terminates in a dense layer of width
    num_classes."""

    arch_id: str
    layer_plan: tuple[tuple, ...]   # ("dense", width) | ("relu",) | ("conv2d-small", filters, kernel) | ("flatten",)
    input_dim: int
    num_classes: int


def mlp_spec(arch_id: str, hidden: tuple[int, ...], input_dim: int,
             num_classes: int) -> ArchitectureSpec:
    plan: list[tuple] = []
    for width in hidden:
        plan.append(("dense", int(width)))
        plan.append(("relu",))
    plan.append(("dense", int(num_classes)))
    return ArchitectureSpec(arch_id, tuple(plan), input_dim, num_classes)


def cnn_small_spec(input_dim: int, num_classes: int, filters: int = 4,
                   kernel: int = 3, arch_id: str = "cnn-small") -> ArchitectureSpec:
    """Tiny conv net for inputs that are flattened side x side squares."""
    side = math.isqrt(input_dim)
    if side * side != input_dim:
        raise ConfigurationError(
            f"'{arch_id}' needs a square input dimension, got {input_dim}"
        )
    plan = (
        ("conv2d-small", int(filters), int(kernel)),
        ("relu",),
        ("flatten",),
        ("dense", int(num_classes)),
    )
    return ArchitectureSpec(arch_id, plan, input_dim, num_classes)


def parameter_count(spec: ArchitectureSpec) -> int:
    total = 0
    width = spec.input_dim
    shape: tuple[int, ...] = (width,)
    for entry in spec.layer_plan:
        kind = entry[0]
        if kind == "dense":
            total += width * entry[1] + entry[1]
            width = entry[1]
            shape = (width,)
        elif kind == "conv2d-small":
            filters, kernel = entry[1], entry[2]
            side = math.isqrt(width)
            c, h, w = (1, side, side) if len(shape) == 1 else shape
            total += filters * c * kernel * kernel + filters
            shape = (filters, h - kernel + 1, w - kernel + 1)
            width = int(np.prod(shape))
        elif kind in ("relu", "flatten"):
            if kind == "flatten":
                shape = (width,)
        else:
            raise ConfigurationError(f"unknown layer kind '{kind}' in '{spec.arch_id}'")
    return total


def build_model(spec: ArchitectureSpec, seed: int) -> Model:
    """Deterministic Xavier-uniform initialization from (spec, seed)."""
    rng = np.random.default_rng(seed)
    layers = []
    width = spec.input_dim
    shape: tuple[int, ...] = (width,)
    for i, entry in enumerate(spec.layer_plan):
        kind = entry[0]
        name = f"{kind}_{i}"
        if kind == "dense":
            layers.append(Dense(name, width, entry[1], rng=rng))
            width = entry[1]
            shape = (width,)
        elif kind == "relu":
            layers.append(ReLU(name))
        elif kind == "flatten":
            layers.append(Flatten(name))
            shape = (width,)
        elif kind == "conv2d-small":
            filters, kernel = entry[1], entry[2]
            side = math.isqrt(width)
            in_shape = (1, side, side) if len(shape) == 1 else shape
            layers.append(Conv2DSmall(name, in_shape, filters, kernel, rng=rng))
            shape = (filters, in_shape[1] - kernel + 1, in_shape[2] - kernel + 1)
            width = int(np.prod(shape))
        else:
            raise ConfigurationError(f"unknown layer kind '{kind}' in '{spec.arch_id}'")
    return Model(layers, spec.arch_id)


class ArchitectureRegistry:
    """Maps arch ids to specs for a fixed (input_dim, num_classes) problem.

    Ids of the form mlp-<w1>-<w2>-... are understood without registration:
    the numbers are hidden-layer widths.
    """

    def __init__(self, input_dim: int, num_classes: int):
        if input_dim < 2 or num_classes < 2:
            raise ConfigurationError(
                f"registry needs input_dim >= 2 and num_classes >= 2, got "
                f"({input_dim}, {num_classes})"
            )
        self.input_dim = input_dim
        self.num_classes = num_classes
        self._specs: dict[str, ArchitectureSpec] = {}

    @property
    def arch_ids(self) -> list[str]:
        return list(self._specs)

    def register(self, spec: ArchitectureSpec) -> ArchitectureSpec:
        if spec.arch_id in self._specs:
            raise ConfigurationError(f"architecture '{spec.arch_id}' already registered")
        if spec.input_dim != self.input_dim or spec.num_classes != self.num_classes:
            raise ConfigurationError(
                f"spec '{spec.arch_id}' is for ({spec.input_dim}, {spec.num_classes}), "
                f"registry is for ({self.input_dim}, {self.num_classes})"
            )
        self._specs[spec.arch_id] = spec
        return spec

    def get(self, arch_id: str) -> ArchitectureSpec:
        if arch_id in self._specs:
            return self._specs[arch_id]
        if _MLP_ID.fullmatch(arch_id):
            hidden = tuple(int(tok) for tok in arch_id.split("-")[1:])
            return mlp_spec(arch_id, hidden, self.input_dim, self.num_classes)
        raise ConfigurationError(
            f"unknown architecture '{arch_id}'; registered: {sorted(self._specs) or 'none'}"
        )

    def init_model(self, arch_id: str, seed: int) -> Model:
        return build_model(self.get(arch_id), seed)


def register_builtin_zoo(input_dim: int, num_classes: int,
                         registry: ArchitectureRegistry | None = None) -> list[ArchitectureSpec]:
    """Create (and register) the four built-in MLP variants.

    The variants have pairwise-different parameter counts, which keeps the
    clients structurally heterogeneous.
    """
    if registry is None:
        registry = ArchitectureRegistry(input_dim, num_classes)
    specs = [
        registry.register(mlp_spec(arch_id, hidden, input_dim, num_classes))
        for arch_id, hidden in ZOO_HIDDEN.items()
    ]
    return specs


def homogeneous_assignment(spec: ArchitectureSpec, num_clients: int) -> list[str]:
    """Give every client the same architecture id."""
    if num_clients < 1:
        raise ConfigurationError(f"num_clients must be >= 1, got {num_clients}")
    return [spec.arch_id] * num_clients
