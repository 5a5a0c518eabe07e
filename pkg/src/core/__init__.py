"""Core types, validation, configuration and errors."""

from src.core.exceptions import (
    ComplexPolarizability,
    ConfigLoadError,
    ConvergenceError,
    EmptyStack,
    IndexOutOfRange,
    LightstackError,
    MaxStepsExceeded,
    NoConvergence,
    NonFiniteValue,
    NoPump,
    NoSlabStructure,
    NotIdenticalClouds,
    OverlappingScatterers,
    StackValidationError,
    StepCausesCrossing,
    UnorderedScatterers,
    ZeroPolarizability,
)
from src.core.types import (
    EPSILON_0,
    MIN_GAP,
    WAVELENGTH,
    WAVENUMBER,
    Pump,
    Scatterer,
    Stack,
    lattice_constant,
    single_scatterer_force,
)
from src.core.validation import validate_stack

__all__ = [
    "EPSILON_0",
    "MIN_GAP",
    "WAVELENGTH",
    "WAVENUMBER",
    "ComplexPolarizability",
    "ConfigLoadError",
    "ConvergenceError",
    "EmptyStack",
    "IndexOutOfRange",
    "LightstackError",
    "MaxStepsExceeded",
    "NoConvergence",
    "NoPump",
    "NoSlabStructure",
    "NonFiniteValue",
    "NotIdenticalClouds",
    "OverlappingScatterers",
    "Pump",
    "Scatterer",
    "Stack",
    "StackValidationError",
    "StepCausesCrossing",
    "UnorderedScatterers",
    "ZeroPolarizability",
    "lattice_constant",
    "single_scatterer_force",
    "validate_stack",
]
