"""Desk-scale ray tomography and gauge-aware potential recovery on product charts."""

from . import errors, forms, manifold

__all__ = ["errors", "forms", "manifold"]

__version__ = "0.1.0"
