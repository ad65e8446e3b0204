"""Deterministic single-asset, long-only strategy evaluation engine."""

__version__ = "0.1.0"
