"""Hierarchical attention document models with sentence structure tags."""

__version__ = "0.1.0"
