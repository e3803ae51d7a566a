"""Concurrent DDPG with causally informed replay sharing and coordinated exploration."""

__version__ = "0.1.0"
