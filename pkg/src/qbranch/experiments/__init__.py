"""Stern-Gerlach and Bell models."""

from .bell import (
    LABELS,
    BellBranches,
    BellCheck,
    BellConfig,
    BellOutcome,
    bell_ensemble,
    bell_exact,
    bell_single,
    bell_state_check,
    bell_weights,
)
from .packets import GaussianPacket, quadrature_moments
from .stern_gerlach import (
    PacketBranch,
    SternGerlachConfig,
    SternGerlachReport,
    component_separation,
    kicked_packets,
    separation_condition,
    stern_gerlach_run,
    surrogate_complexity,
)

__all__ = [name for name in dir() if not name.startswith("_")]
