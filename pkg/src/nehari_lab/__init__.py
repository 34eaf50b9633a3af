"""Nehari-manifold laboratory for mixed local/nonlocal concave-convex problems."""

__version__ = "0.1.0"
