"""Checkpoint bridge: depthwise weights in and out of NPY banks."""

from .core import (
    AmbiguousPatternError,
    BridgeError,
    DtypeMismatchError,
    LayerSelector,
    NoMatchingLayersError,
    ShapeMismatchError,
    extract,
    inject,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousPatternError",
    "BridgeError",
    "DtypeMismatchError",
    "LayerSelector",
    "NoMatchingLayersError",
    "ShapeMismatchError",
    "extract",
    "inject",
    "__version__",
]
