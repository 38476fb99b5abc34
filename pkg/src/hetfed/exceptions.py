"""Error types shared across the package.

Everything derives from HetFedError so callers can catch the whole family;
the ValueError/RuntimeError mixins keep the classes idiomatic for code that
only knows the standard hierarchy (sklearn, argparse handlers, ...).
"""


class HetFedError(Exception):
    """Base class for all errors raised by hetfed."""


class DimensionError(HetFedError, ValueError):
    """Array shapes are incompatible (names the offending layer/operand)."""


class StateError(HetFedError, RuntimeError):
    """Operation called out of order, e.g. backward before forward."""


class ConfigurationError(HetFedError, ValueError):
    """Invalid knob value, unknown key, or unknown architecture id."""


class PartitionError(HetFedError, RuntimeError):
    """Dirichlet partition could not satisfy the non-empty-client rule."""


class DatasetFormatError(HetFedError, ValueError):
    """On-disk dataset is malformed or fails validation."""
