"""Exception hierarchy for lightstack.

Every error carries a human-readable message and a ``details`` dict so
that the command line can report it and the run log can record it.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from src.dynamics.equilibria import Equilibrium


class LightstackError(Exception):
    """Base exception for lightstack."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ConfigLoadError(LightstackError):
    """Raised when a configuration file cannot be read, parsed or validated."""

    pass


class StackValidationError(LightstackError):
    """Raised when a stack violates a structural rule."""

    def __init__(
        self,
        message: str,
        field: str | None = None,
        details: dict[str, Any] | None = None,
    ):
        super().__init__(message, details)
        self.field = field


class OverlappingScatterers(StackValidationError):
    """Raised when two neighbouring scatterers are closer than the minimum gap."""

    def __init__(self, index: int, gap: float, min_gap: float):
        super().__init__(
            f"OverlappingScatterers at index {index}: gap {gap:g} < {min_gap:g}",
            field=f"scatterers.{index}.position",
            details={"index": index, "gap": gap},
        )
        self.index = index


class UnorderedScatterers(StackValidationError):
    """Raised when positions are not sorted left to right."""

    def __init__(self, index: int, position: float, previous: float):
        super().__init__(
            f"UnorderedScatterers at index {index}: position {position:g} "
            f"lies left of index {index - 1} at {previous:g}",
            field=f"scatterers.{index}.position",
            details={"index": index, "position": position, "previous": previous},
        )
        self.index = index


class EmptyStack(StackValidationError):
    """Raised when a stack holds no scatterers."""

    def __init__(self) -> None:
        super().__init__("EmptyStack: at least one scatterer is required", field="scatterers")


class NoPump(StackValidationError):
    """Raised when both incident amplitudes are zero."""

    def __init__(self) -> None:
        super().__init__("NoPump: at least one incident amplitude must be non-zero", field="pump")


class NonFiniteValue(StackValidationError):
    """Raised when a position, polarizability or amplitude is NaN or infinite."""

    def __init__(self, field: str, value: Any):
        super().__init__(
            f"NonFiniteValue at {field}: {value!r}",
            field=field,
            details={"value": repr(value)},
        )


class ZeroPolarizability(StackValidationError):
    """Raised when a scatterer has Λ = 0."""

    def __init__(self, index: int):
        super().__init__(
            f"ZeroPolarizability at index {index}",
            field=f"scatterers.{index}.lambda",
            details={"index": index},
        )


class ComplexPolarizability(StackValidationError):
    """Raised when a scatterer has a non-real Λ (absorbing media are unsupported)."""

    def __init__(self, index: int, value: Any):
        super().__init__(
            f"ComplexPolarizability at index {index}: {value!r}",
            field=f"scatterers.{index}.lambda",
            details={"index": index, "value": repr(value)},
        )


class IndexOutOfRange(LightstackError, IndexError):
    """Raised when a scatterer or region index does not exist."""

    def __init__(self, index: int, size: int):
        super().__init__(
            f"IndexOutOfRange: index {index} not in [0, {size})",
            details={"index": index, "size": size},
        )


class StepCausesCrossing(LightstackError):
    """Raised when a finite-difference step would reorder scatterers."""

    def __init__(self, index: int, step: float, gap: float):
        super().__init__(
            f"StepCausesCrossing at index {index}: step {step:g} vs gap {gap:g}",
            details={"index": index, "step": step, "gap": gap},
        )


class NotIdenticalClouds(LightstackError):
    """Raised when a lattice analysis meets mobile scatterers of different Λ."""

    pass


class NoSlabStructure(LightstackError):
    """Raised when a configuration does not separate into at least two slabs."""

    pass


class ConvergenceError(LightstackError):
    """Raised when an iterative search stops before reaching its tolerance.

    ``best`` holds the best configuration reached, flagged non-converged.
    """

    def __init__(
        self,
        message: str,
        best: Equilibrium | None = None,
        details: dict[str, Any] | None = None,
    ):
        super().__init__(message, details)
        self.best = best


class MaxStepsExceeded(ConvergenceError):
    """Raised when overdamped relaxation runs out of steps."""

    pass


class NoConvergence(ConvergenceError):
    """Raised when the Newton search (with its relaxation fallback) fails."""

    pass
