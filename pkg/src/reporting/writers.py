"""CSV and YAML output files.

Floats are written with ``repr`` so that every value read back is the
same double; complex values become ``[re, im]`` pairs in YAML.
"""

from __future__ import annotations

import csv
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from src import __version__


def format_value(value: Any) -> str:
    """Text form of one CSV cell; floats round-trip exactly."""
    if isinstance(value, bool | np.bool_):
        return "true" if value else "false"
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a header line and one line per row."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    """Header and raw rows of a CSV written by :func:`write_csv`."""
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]


def plain(value: Any) -> Any:
    """Convert numpy and complex values into YAML-safe builtins."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, complex | np.complexfloating):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def write_yaml(path: Path, data: dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(plain(data), f, sort_keys=False)
    return path


@dataclass
class RunManifest:
    """Everything needed to reproduce a run."""

    run_id: str
    subcommand: str
    timestamp: str
    config: dict[str, Any] | None = None
    parameters: dict[str, Any] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    status: str = "ok"

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "lightstack_version": __version__,
            "run_id": self.run_id,
            "subcommand": self.subcommand,
            "timestamp": self.timestamp,
            "status": self.status,
            "parameters": self.parameters,
            "outputs": self.outputs,
        }
        if self.config is not None:
            data["config"] = self.config
        return data

    def write(self, directory: Path) -> Path:
        return write_yaml(directory / "manifest.yaml", self.to_dict())
