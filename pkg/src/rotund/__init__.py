"""Convex integral functionals on finite measure spaces."""

__version__ = "0.1.0"
