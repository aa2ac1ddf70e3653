"""
JSONL logger for pipeline runs.

Writes command lifecycle events and the library's diagnostic events to a JSONL file.
No timestamps are written, so two identical runs give identical logs.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional

from pipeline.report_io import plain
from wkam.events import EventLog


class RunLogger:
    """Logger that writes run events to a JSONL file."""

    def __init__(self, log_file: str = "run_events.jsonl"):
        """
        Initialize run logger.

        Args:
            log_file: Path to log file; it is created or truncated.
        """
        self.log_file = str(log_file)
        self.event_count = 0

        with open(self.log_file, "w"):
            pass

    def log_event(self, event_type: str, **kwargs):
        """
        Log a run event to the JSONL file.

        Args:
            event_type: Type of event (e.g., "run_start", "artifact", "run_end")
            **kwargs: Additional event data
        """
        event = {
            "event_id": self.event_count,
            "event_type": event_type,
            **plain(kwargs),
        }

        with open(self.log_file, "a", newline="\n") as f:
            f.write(json.dumps(event) + "\n")

        self.event_count += 1

    def log_run_start(self, command: str, config_path: Optional[str], n: int, d: int):
        """Log run start event. Thread counts are left out, they never change results."""
        self.log_event(
            "run_start",
            command=command,
            config=config_path,
            n=n,
            d=d,
        )

    def log_artifact(self, path: Path, kind: str):
        """Log an artifact written to the output directory."""
        self.log_event("artifact", path=Path(path).name, kind=kind)

    def log_diagnostics(self, event_log: EventLog):
        """Copy every diagnostic event collected by the library."""
        for event in event_log.get_events():
            self.log_event(
                "diagnostic",
                diagnostic=event.event_type.value,
                source=event.source,
                details=event.details,
            )

    def log_run_end(self, command: str, exit_code: int, summary: Optional[Dict[str, Any]] = None):
        """Log run end event."""
        self.log_event(
            "run_end",
            command=command,
            exit_code=exit_code,
            summary=summary or {},
        )
