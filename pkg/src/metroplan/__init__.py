"""Multi-year, multi-band planner for hierarchical optical metro networks."""

__version__ = "0.1.0"
