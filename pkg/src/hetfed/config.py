"""Experiment configuration: flat `key = value` files, defaults, validation.

Unknown keys and out-of-range values fail loudly with the key name and the
violated constraint. format_config(parse_config(path)) round-trips.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .exceptions import ConfigurationError

NOISE_KINDS = ("none", "pair", "symmetric")


@dataclass
class FederationConfig:
    """Every experiment knob, with defaults for the omitted ones."""

    num_clients: int = 4
    rounds: int = 40
    local_epochs: int = 1
    learning_rate: float = 0.001
    batch_size: int = 16
    lam: float = 0.1
    noise_rate: float = 0.0
    noise_kind: str = "none"
    gamma: float = 0.5
    seed: int = 0
    arch_assignment: str = "heterogeneous-zoo"
    dataset: str = "synthetic"
    dataset_path: str = ""
    num_classes: int = 13
    feature_dim: int = 64
    num_samples: int = 2600
    separation: float = 4.0
    public_fraction: float = 0.25
    test_fraction: float = 0.2
    temperature: float = 1.0
    use_symmetric_loss: bool = True
    use_collaboration: bool = True


# File keys are the dataclass field names except for the loss weight, which
# is written as `lambda` in config files.
_FIELD_TO_KEY = {f.name: ("lambda" if f.name == "lam" else f.name)
                 for f in dataclasses.fields(FederationConfig)}
_KEY_TO_FIELD = {key: name for name, key in _FIELD_TO_KEY.items()}


def _convert(key: str, field: dataclasses.Field, raw: str):
    if field.type == "bool" or isinstance(field.default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"key '{key}': expected true/false, got '{raw}'")
    if isinstance(field.default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigurationError(f"key '{key}': expected integer, got '{raw}'") from None
    if isinstance(field.default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigurationError(f"key '{key}': expected real, got '{raw}'") from None
    return raw


def parse_config_text(text: str, origin: str = "<config>") -> FederationConfig:
    fields = {f.name: f for f in dataclasses.fields(FederationConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(
                f"{origin}: line {lineno}: expected 'key = value', got '{stripped}'"
            )
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _KEY_TO_FIELD:
            raise ConfigurationError(f"{origin}: line {lineno}: unknown key '{key}'")
        name = _KEY_TO_FIELD[key]
        if name in values:
            raise ConfigurationError(f"{origin}: line {lineno}: duplicate key '{key}'")
        values[name] = _convert(key, fields[name], raw)
    config = FederationConfig(**values)
    validate_config(config)
    return config


def parse_config(path: str) -> FederationConfig:
    """Parse and validate a config file, applying defaults to omitted keys."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), origin=path)


def validate_config(config: FederationConfig) -> FederationConfig:
    def require(ok: bool, key: str, constraint: str, value):
        if not ok:
            raise ConfigurationError(f"key '{key}': must satisfy {constraint}, got {value!r}")

    c = config
    require(c.num_clients >= 2, "num_clients", "P >= 2", c.num_clients)
    require(c.rounds >= 0, "rounds", "E_c >= 0", c.rounds)
    require(c.local_epochs >= 1, "local_epochs", "E_l >= 1", c.local_epochs)
    require(c.learning_rate > 0, "learning_rate", "alpha > 0", c.learning_rate)
    require(c.batch_size >= 1, "batch_size", "b >= 1", c.batch_size)
    require(c.lam >= 0, "lambda", "lambda >= 0", c.lam)
    require(0 <= c.noise_rate < 1, "noise_rate", "0 <= mu < 1", c.noise_rate)
    require(c.noise_kind in NOISE_KINDS, "noise_kind", f"one of {NOISE_KINDS}", c.noise_kind)
    if c.noise_kind == "pair":
        require(c.noise_rate <= 0.5, "noise_rate", "mu <= 0.5 for pair flip", c.noise_rate)
    require(c.gamma > 0, "gamma", "gamma > 0", c.gamma)
    require(c.seed >= 0, "seed", "seed >= 0", c.seed)
    require(
        c.arch_assignment == "heterogeneous-zoo" or c.arch_assignment.startswith("homogeneous:"),
        "arch_assignment", "'heterogeneous-zoo' or 'homogeneous:<arch-id>'", c.arch_assignment,
    )
    require(c.dataset in ("synthetic", "file"), "dataset", "'synthetic' or 'file'", c.dataset)
    if c.dataset == "file" and not c.dataset_path:
        raise ConfigurationError("key 'dataset_path': required when dataset = file")
    require(c.num_classes >= 2, "num_classes", "C >= 2", c.num_classes)
    require(c.feature_dim >= 2, "feature_dim", "d >= 2", c.feature_dim)
    require(c.num_samples >= c.num_classes, "num_samples", "n >= num_classes", c.num_samples)
    require(c.separation > 0, "separation", "separation > 0", c.separation)
    require(0 < c.public_fraction < 1, "public_fraction", "0 < fraction < 1", c.public_fraction)
    require(0 < c.test_fraction < 1, "test_fraction", "0 < fraction < 1", c.test_fraction)
    require(c.temperature > 0, "temperature", "T > 0", c.temperature)
    return config


def format_config(config: FederationConfig) -> str:
    """Emit the flat key = value form; parse_config_text inverts it."""
    lines = []
    for f in dataclasses.fields(FederationConfig):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{_FIELD_TO_KEY[f.name]} = {rendered}")
    return "\n".join(lines) + "\n"


def config_to_dict(config: FederationConfig) -> dict:
    """JSON-ready echo using the file-format key names."""
    return {_FIELD_TO_KEY[f.name]: getattr(config, f.name)
            for f in dataclasses.fields(FederationConfig)}


def config_from_dict(payload: dict) -> FederationConfig:
    values = {}
    for key, value in payload.items():
        if key not in _KEY_TO_FIELD:
            raise ConfigurationError(f"unknown key '{key}'")
        values[_KEY_TO_FIELD[key]] = value
    return validate_config(FederationConfig(**values))
