"""Simulation configuration loader.

Reads a YAML document, checks it against ``CONFIG_SCHEMA`` and turns it
into a validated :class:`SimulationConfig`. A run manifest written by the
command line nests the resolved configuration under ``config:`` and is
accepted as input too, so any run can be reproduced from its manifest.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml
from jsonschema import Draft202012Validator

from src.core.exceptions import ConfigLoadError
from src.core.types import Pump, Scatterer, Stack
from src.core.validation import validate_stack

THREADS_ENV_VAR = "LIGHTSTACK_THREADS"

_NUMBER = {"type": "number"}
_COMPLEX = {
    "oneOf": [
        _NUMBER,
        {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
    ]
}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["scatterers", "pump"],
    "additionalProperties": False,
    "properties": {
        "scatterers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["position", "lambda"],
                "additionalProperties": False,
                "properties": {"position": _NUMBER, "lambda": _COMPLEX},
            },
        },
        "pump": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"left": _COMPLEX, "right": _COMPLEX},
        },
        "grid_points_per_wavelength": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "frozen": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "anneal": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "initial_temperature": {"type": ["number", "null"], "minimum": 0},
                "cooling_factor": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "sweeps": {"type": "integer", "minimum": 1},
                "move_scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "chains": {"type": "integer", "minimum": 1},
        "greedy": {"type": "boolean"},
        "relax": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_steps": {"type": "integer", "minimum": 1},
            },
        },
        "equilibrate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "max_steps": {"type": "integer", "minimum": 1},
            },
        },
    },
}

_VALIDATOR = Draft202012Validator(CONFIG_SCHEMA)


def _to_complex(value: Any) -> complex:
    if isinstance(value, list | tuple):
        return complex(float(value[0]), float(value[1]))
    return complex(value)


def _from_complex(value: complex) -> list[float]:
    return [float(value.real), float(value.imag)]


def _polarizability(value: Any) -> float | complex:
    # Real Λ stays a float; a complex one is kept so validation can reject it.
    number = _to_complex(value)
    return number.real if number.imag == 0.0 else number


@dataclass(frozen=True)
class SimulationConfig:
    """Resolved simulation parameters."""

    stack: Stack
    grid_points_per_wavelength: int = 256
    seed: int = 0
    frozen: tuple[int, ...] = ()
    anneal: dict[str, Any] = field(default_factory=dict)
    chains: int = 1
    greedy: bool = False
    relax: dict[str, Any] = field(default_factory=dict)
    equilibrate: dict[str, Any] = field(default_factory=dict)
    source: Path | None = None

    @classmethod
    def from_dict(cls, config: dict[str, Any], source: Path | None = None) -> SimulationConfig:
        """Create a configuration from a schema-valid mapping.

        Raises:
            StackValidationError: If the stack breaks a structural rule.
            ConfigLoadError: If a frozen index does not exist.
        """
        pump_cfg = config.get("pump", {})
        stack = Stack(
            scatterers=tuple(
                Scatterer(float(s["position"]), _polarizability(s["lambda"]))
                for s in config["scatterers"]
            ),
            pump=Pump(
                left=_to_complex(pump_cfg.get("left", 0.0)),
                right=_to_complex(pump_cfg.get("right", 0.0)),
            ),
        )
        validate_stack(stack)

        frozen = tuple(sorted(set(config.get("frozen", []))))
        for index in frozen:
            if index >= len(stack):
                raise ConfigLoadError(
                    f"Frozen index {index} out of range for {len(stack)} scatterers",
                    details={"field": "frozen"},
                )

        return cls(
            stack=stack,
            grid_points_per_wavelength=config.get("grid_points_per_wavelength", 256),
            seed=config.get("seed", 0),
            frozen=frozen,
            anneal=dict(config.get("anneal", {})),
            chains=config.get("chains", 1),
            greedy=config.get("greedy", False),
            relax=dict(config.get("relax", {})),
            equilibrate=dict(config.get("equilibrate", {})),
            source=source,
        )

    def to_dict(self) -> dict[str, Any]:
        """Mapping that :meth:`from_dict` turns back into an identical configuration."""
        data: dict[str, Any] = {
            "scatterers": [
                {"position": s.position, "lambda": s.lambda_param} for s in self.stack.scatterers
            ],
            "pump": {
                "left": _from_complex(complex(self.stack.pump.left)),
                "right": _from_complex(complex(self.stack.pump.right)),
            },
            "grid_points_per_wavelength": self.grid_points_per_wavelength,
            "seed": self.seed,
            "frozen": list(self.frozen),
            "chains": self.chains,
            "greedy": self.greedy,
        }
        for block in ("anneal", "relax", "equilibrate"):
            if getattr(self, block):
                data[block] = dict(getattr(self, block))
        return data


def check_schema(config: Any) -> None:
    """Validate a parsed document against ``CONFIG_SCHEMA``.

    Raises:
        ConfigLoadError: Naming the dotted path of the first offending field.
    """
    errors = sorted(_VALIDATOR.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        error = errors[0]
        path = ".".join(str(p) for p in error.absolute_path) or "<root>"
        raise ConfigLoadError(
            f"Schema validation failed at '{path}': {error.message}",
            details={"field": path},
        )


def load_config(path: Path) -> SimulationConfig:
    """Load a simulation configuration (or a run manifest) from YAML.

    Args:
        path: Path to the YAML file.

    Returns:
        SimulationConfig with a validated stack.

    Raises:
        ConfigLoadError: If the file cannot be found, parsed or validated.
        StackValidationError: If the stack breaks a structural rule.
    """
    if not path.exists():
        raise ConfigLoadError(f"Config file not found: {path}")

    try:
        with open(path, encoding="utf-8") as f:
            document = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigLoadError(f"Failed to parse config YAML: {e}") from e

    if not isinstance(document, dict):
        raise ConfigLoadError("Config must be a YAML mapping")

    # Manifests carry the configuration one level down.
    if "config" in document and isinstance(document["config"], dict):
        document = document["config"]

    check_schema(document)
    return SimulationConfig.from_dict(document, source=path)


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: explicit value, else ``LIGHTSTACK_THREADS``, else the CPU count."""
    if requested is not None:
        return max(1, int(requested))
    env_value = os.environ.get(THREADS_ENV_VAR)
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError as e:
            raise ConfigLoadError(
                f"{THREADS_ENV_VAR} must be an integer, got {env_value!r}"
            ) from e
    return os.cpu_count() or 1
