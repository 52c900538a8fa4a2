"""Fold calculus toolkit for free splittings relative to a free factor system."""

from foldkit.context import FactorContext, DeltaConstants, derive_constants

__all__ = ["FactorContext", "DeltaConstants", "derive_constants"]
__version__ = "0.1.0"
