"""Rumor source identification from time-stamped infection snapshots."""

__version__ = "0.1.0"
