"""
Diagnostic event log.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional


class EventType(Enum):
    """Types of diagnostic events."""

    KERNEL_ASSEMBLED = "kernel_assembled"
    KERNEL_CACHE_HIT = "kernel_cache_hit"
    CRITICAL_VALUE = "critical_value"
    SOLVER_CONVERGED = "solver_converged"
    CONJUGATE_CONVERGED = "conjugate_converged"
    BARRIER_STABILIZED = "barrier_stabilized"
    AUBRY_WIDENED = "aubry_widened"
    SELECTOR_BUILT = "selector_built"
    GRID_OFFSET_RETRY = "grid_offset_retry"
    STAGE_COMPLETE = "stage_complete"
    VERDICT = "verdict"


@dataclass
class DiagnosticEvent:
    """A logged diagnostic event."""

    event_type: EventType
    source: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def __repr__(self) -> str:
        source = self.source if self.source is not None else "wkam"
        return f"[{source}] {self.event_type.value}: {self.details}"


class EventLog:
    """Collects diagnostic events emitted while a pipeline runs."""

    def __init__(self):
        self.events: List[DiagnosticEvent] = []

    def log(self, event_type: EventType, source: Optional[str] = None, **details: Any) -> None:
        """Log a diagnostic event."""
        self.events.append(DiagnosticEvent(event_type, source, details))

    def get_events(self) -> List[DiagnosticEvent]:
        """Get all logged events."""
        return self.events.copy()

    def of_type(self, event_type: EventType) -> List[DiagnosticEvent]:
        """Get the events of one type, in logging order."""
        return [e for e in self.events if e.event_type == event_type]

    def clear(self) -> None:
        """Clear the event log."""
        self.events.clear()


def emit(log: Optional[EventLog], event_type: EventType, source: str, **details: Any) -> None:
    """Log into ``log`` when one was supplied."""
    if log is not None:
        log.log(event_type, source, **details)
