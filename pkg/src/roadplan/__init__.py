"""Optimization-based motion planning for autonomous ground vehicles."""

__version__ = "0.1.0"
