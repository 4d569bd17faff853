"""Sharding planner and pipeline simulator for decentralized inference swarms."""

__version__ = "0.1.0"
