"""Run logging.

``RunLogger`` keeps an append-only JSON Lines record of each run beside
its outputs; ``StderrLog`` prints short progress lines on stderr so that
stdout stays free for piping.
"""

from __future__ import annotations

import json
import math
import sys
from datetime import UTC, datetime
from pathlib import Path
from typing import Any, TextIO


def utc_timestamp() -> str:
    """Get current UTC timestamp in ISO 8601 format."""
    return datetime.now(UTC).isoformat().replace("+00:00", "Z")


def _jsonable(value: Any) -> Any:
    """Make numpy scalars, complex numbers and non-finite floats JSON safe."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, Path):
        return str(value)
    return value


class RunLogger:
    """Append-only run log in JSON Lines format, flushed after every write."""

    def __init__(self, log_path: Path) -> None:
        self._log_path = log_path
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(log_path, "a", encoding="utf-8")  # noqa: SIM115

    def _write_line(self, data: dict[str, Any]) -> None:
        self._file.write(json.dumps(_jsonable(data)) + "\n")
        self._file.flush()

    def log_run_start(self, run_id: str, subcommand: str, params: dict[str, Any]) -> None:
        """Log the start of a run with its resolved parameters."""
        self._write_line(
            {
                "type": "start",
                "timestamp": utc_timestamp(),
                "run_id": run_id,
                "subcommand": subcommand,
                "params": params,
            }
        )

    def log_event(self, event_type: str, details: dict[str, Any]) -> None:
        """Log a progress or diagnostic event (convergence, files written, ...)."""
        self._write_line(
            {
                "type": "event",
                "timestamp": utc_timestamp(),
                "event_type": event_type,
                "details": details,
            }
        )

    def log_run_end(self, run_id: str, status: str, duration_ms: float) -> None:
        """Log how a run ended and how long it took."""
        self._write_line(
            {
                "type": "end",
                "timestamp": utc_timestamp(),
                "run_id": run_id,
                "status": status,
                "duration_ms": duration_ms,
            }
        )

    def close(self) -> None:
        if self._file and not self._file.closed:
            self._file.close()

    def __enter__(self) -> RunLogger:
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self.close()


class StderrLog:
    """Prefixed progress messages on stderr."""

    def __init__(self, stderr: TextIO | None = None, quiet: bool = False) -> None:
        self._stderr = stderr or sys.stderr
        self._quiet = quiet

    def log(self, message: str) -> None:
        if self._quiet:
            return
        self._stderr.write(f"[lightstack] {message}\n")
        self._stderr.flush()

    def error(self, message: str) -> None:
        """Errors are printed even when quiet."""
        self._stderr.write(f"[lightstack] Error: {message}\n")
        self._stderr.flush()
