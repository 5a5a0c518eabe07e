"""Value types and unit conventions.

Lengths are in units of the wavelength (λ = 1), so k = 2π. The vacuum
permittivity is 1. Fields are in units of the incident amplitude and
forces in units of ε₀|E_in|²/2, which makes a single scatterer under a
unit one-sided pump feel F₀ = Λ²/(1+Λ²).
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

WAVELENGTH = 1.0
WAVENUMBER = 2.0 * math.pi / WAVELENGTH
EPSILON_0 = 1.0

# Neighbouring scatterers closer than this are treated as coincident.
MIN_GAP = 1e-9


def lattice_constant(polarizability: float) -> float:
    """Force-free spacing of identical clouds under balanced pumping.

    Returns ``λ/2 − atan(Λ)·λ/π``, i.e. 0.46827 λ for Λ = 0.1. Spacings
    are defined modulo λ/2.
    """
    return WAVELENGTH / 2.0 - math.atan(polarizability) * WAVELENGTH / math.pi


def single_scatterer_force(polarizability: float) -> float:
    """Force on a lone scatterer under a unit one-sided pump, F₀ = Λ²/(1+Λ²)."""
    return polarizability**2 / (1.0 + polarizability**2)


@dataclass(frozen=True)
class Scatterer:
    """A thin scatterer at ``position`` with dimensionless polarizability Λ = kη/(2ε₀)."""

    position: float
    polarizability: float | complex

    @property
    def lambda_param(self) -> float:
        """Real part of Λ (validation guarantees the imaginary part is zero)."""
        return float(complex(self.polarizability).real)


@dataclass(frozen=True)
class Pump:
    """Complex amplitudes incident from the left and from the right.

    The left amplitude is referenced at the leftmost scatterer and the
    right amplitude at the rightmost one.
    """

    left: complex = 1.0 + 0.0j
    right: complex = 0.0 + 0.0j

    @classmethod
    def symmetric(cls, amplitude: complex = 1.0) -> Pump:
        """Equal pumps from both sides."""
        return cls(left=complex(amplitude), right=complex(amplitude))

    @classmethod
    def left_only(cls, amplitude: complex = 1.0) -> Pump:
        """Pump incident from the left only."""
        return cls(left=complex(amplitude), right=0.0j)

    def scaled(self, factor: complex) -> Pump:
        """Both amplitudes multiplied by ``factor``."""
        return Pump(left=self.left * factor, right=self.right * factor)


@dataclass(frozen=True)
class Stack:
    """Scatterers in increasing position order plus the pump.

    Instances are immutable and hashable; use :func:`src.core.validation.
    validate_stack` before solving untrusted input.
    """

    scatterers: tuple[Scatterer, ...]
    pump: Pump = field(default_factory=Pump)

    def __post_init__(self) -> None:
        if not isinstance(self.scatterers, tuple):
            object.__setattr__(self, "scatterers", tuple(self.scatterers))

    @classmethod
    def from_arrays(
        cls,
        positions: Iterable[float],
        polarizabilities: float | Iterable[float],
        pump: Pump | None = None,
    ) -> Stack:
        """Build a stack from positions and one Λ (shared) or one Λ per scatterer."""
        zs = [float(z) for z in positions]
        if isinstance(polarizabilities, int | float | complex):
            lams: Sequence[float | complex] = [polarizabilities] * len(zs)
        else:
            lams = list(polarizabilities)
        return cls(
            scatterers=tuple(Scatterer(z, lam) for z, lam in zip(zs, lams, strict=True)),
            pump=pump or Pump(),
        )

    def __len__(self) -> int:
        return len(self.scatterers)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.scatterers], dtype=float)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([s.lambda_param for s in self.scatterers], dtype=float)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.positions)

    def with_positions(self, positions: Iterable[float]) -> Stack:
        """Same scatterers and pump at new positions."""
        return Stack(
            scatterers=tuple(
                Scatterer(float(z), s.polarizability)
                for z, s in zip(positions, self.scatterers, strict=True)
            ),
            pump=self.pump,
        )

    def with_pump(self, pump: Pump) -> Stack:
        return Stack(scatterers=self.scatterers, pump=pump)
