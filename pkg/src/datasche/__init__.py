"""Skew-aware data collection and training scheduler for in-network learning."""

from .model import (
    ConfigError,
    DegenerateInput,
    FrameworkConfig,
    InvariantViolation,
    MultiplierSet,
    QueueState,
    SlotDecision,
    StructuralError,
    SystemState,
)
from .scheduler import PolicyKind, Scheduler
from .sim import Episode, TraceSpec, run_episode, summarize_comparison

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateInput",
    "Episode",
    "FrameworkConfig",
    "InvariantViolation",
    "MultiplierSet",
    "PolicyKind",
    "QueueState",
    "Scheduler",
    "SlotDecision",
    "StructuralError",
    "SystemState",
    "TraceSpec",
    "run_episode",
    "summarize_comparison",
]
