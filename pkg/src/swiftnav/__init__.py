"""Planar UAV navigation: guidance-line travel, fuzzy-gated mode arbitration,
a TD3 waypoint planner with prioritized replay, and a trajectory checker."""

__version__ = "0.1.0"
