"""Reward-guided metaheuristic search over text-generator outputs."""

__version__ = "0.1.0"
