"""Force maps of a beam splitter inside a two-mirror cavity.

The cavity is two equal mirrors at z = 0 and z = L, pumped from the left
only; a beam splitter sits at z_a in between. For every (L, z_a) on a grid
the force on the beam splitter is reported in units of F₀, the force the
same splitter feels alone in the beam. Rows of fixed L are solved as one
batch each, in a thread pool, and assembled in order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from src.core.types import MIN_GAP, WAVELENGTH, Pump, Stack, single_scatterer_force
from src.core.validation import validate_stack
from src.dynamics.equilibria import ZeroCrossing, zero_crossings
from src.optics.field_solver import solve_batch
from src.optics.forces import forces_from_amplitudes

# Contour classes in units of F₀: (name, lower bound exclusive, upper bound inclusive).
CONTOUR_CLASSES: tuple[tuple[str, float, float], ...] = (
    ("resonant", 10.0, math.inf),
    ("strong", 0.1, 10.0),
    ("weak", 0.001, 0.1),
    ("negligible", -math.inf, 0.001),
)

GRID_HEADER = ("z_a", "L", "force_over_F0")


@dataclass(frozen=True)
class CavitySpec:
    """Mirror polarizability (None for no mirrors) and the cavity lengths to scan."""

    mirror_lambda: float | None
    length_min: float
    length_max: float
    n_lengths: int


@dataclass(frozen=True)
class BeamSplitterSpec:
    """Beam-splitter polarizability and the positions to scan."""

    lambda_param: float
    position_min: float
    position_max: float
    n_positions: int


def empty_cavity_resonance(mirror_lambda: float, near: float) -> float:
    """Resonant length of the empty cavity closest to ``near``.

    Resonance needs r²·e^{2ikL} = 1 with r = iΛ/(1−iΛ), i.e.
    L = nλ/2 − arg(r)·λ/(2π).
    """
    reflection = 1j * mirror_lambda / (1.0 - 1j * mirror_lambda)
    shift = math.atan2(reflection.imag, reflection.real) * WAVELENGTH / (2.0 * math.pi)
    order = round((near + shift) / (WAVELENGTH / 2.0))
    return order * WAVELENGTH / 2.0 - shift


@dataclass(frozen=True, eq=False)
class SweepGrid:
    """Normalised force F/F₀ over (length, position)."""

    cavity: CavitySpec
    splitter: BeamSplitterSpec
    lengths: np.ndarray
    positions: np.ndarray
    values: np.ndarray
    f0: float
    resonance_length: float | None

    @property
    def detunings(self) -> np.ndarray:
        """2π(L − L_res)/λ for each row; zeros when there are no mirrors."""
        if self.resonance_length is None:
            return np.zeros_like(self.lengths)
        return 2.0 * math.pi * (self.lengths - self.resonance_length) / WAVELENGTH

    def contour_counts(self) -> dict[str, int]:
        """Number of grid points in each contour class of |F|/F₀."""
        magnitude = np.abs(self.values)
        return {
            name: int(np.count_nonzero((magnitude > low) & (magnitude <= high)))
            for name, low, high in CONTOUR_CLASSES
        }

    def contour_fractions(self) -> dict[str, float]:
        total = self.values.size
        return {name: count / total for name, count in self.contour_counts().items()}

    def row_equilibria(self, row: int) -> list[ZeroCrossing]:
        """Zeros of the force along row ``row``; descending ones are stable."""
        return zero_crossings(self.positions, self.values[row])

    def rows(self) -> list[tuple[float, float, float]]:
        """(z_a, L, F/F₀) for every grid point, one cavity length after another."""
        return [
            (float(z), float(length), float(value))
            for length, row in zip(self.lengths, self.values, strict=True)
            for z, value in zip(self.positions, row, strict=True)
        ]

    def summary(self) -> dict:
        stable_spacings = []
        for row in range(len(self.lengths)):
            stable = [c.position for c in self.row_equilibria(row) if c.descending]
            stable_spacings.extend(np.diff(stable).tolist())
        return {
            "f0": self.f0,
            "resonance_length": self.resonance_length,
            "shape": [len(self.lengths), len(self.positions)],
            "contour_counts": self.contour_counts(),
            "contour_fractions": self.contour_fractions(),
            "mean_stable_spacing": float(np.mean(stable_spacings)) if stable_spacings else None,
        }


def _check_grid(cavity: CavitySpec, splitter: BeamSplitterSpec) -> None:
    if cavity.n_lengths < 1 or splitter.n_positions < 2:
        raise ValueError("Grid needs at least one length and two positions")
    if cavity.length_max < cavity.length_min or splitter.position_max <= splitter.position_min:
        raise ValueError("Grid ranges must be increasing")
    if cavity.mirror_lambda is not None:
        if splitter.position_min <= MIN_GAP or splitter.position_max >= cavity.length_min - MIN_GAP:
            raise ValueError(
                f"Beam-splitter range [{splitter.position_min}, {splitter.position_max}] "
                f"must lie strictly inside (0, {cavity.length_min})"
            )
        probe = Stack.from_arrays(
            [0.0, splitter.position_min, cavity.length_min],
            [cavity.mirror_lambda, splitter.lambda_param, cavity.mirror_lambda],
            Pump.left_only(),
        )
    else:
        probe = Stack.from_arrays([splitter.position_min], [splitter.lambda_param], Pump.left_only())
    validate_stack(probe)


def _row(cavity: CavitySpec, splitter: BeamSplitterSpec, positions: np.ndarray, length: float):
    if cavity.mirror_lambda is None:
        configs = positions[:, None]
        lambdas = np.array([splitter.lambda_param])
        column = 0
    else:
        configs = np.column_stack(
            [np.zeros_like(positions), positions, np.full_like(positions, length)]
        )
        lambdas = np.array([cavity.mirror_lambda, splitter.lambda_param, cavity.mirror_lambda])
        column = 1
    amplitudes = solve_batch(configs, lambdas, 1.0, 0.0)
    return forces_from_amplitudes(amplitudes)[:, column]


def force_map(
    cavity: CavitySpec, splitter: BeamSplitterSpec, max_workers: int = 1
) -> SweepGrid:
    """Force on the beam splitter over the (L, z_a) grid, in units of F₀.

    Raises:
        ValueError: If the ranges are empty or leave the cavity.
        StackValidationError: If a polarizability is invalid.
    """
    _check_grid(cavity, splitter)
    lengths = np.linspace(cavity.length_min, cavity.length_max, cavity.n_lengths)
    positions = np.linspace(splitter.position_min, splitter.position_max, splitter.n_positions)
    f0 = single_scatterer_force(splitter.lambda_param)

    def row(length: float) -> np.ndarray:
        return _row(cavity, splitter, positions, float(length))

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(row, lengths))
    else:
        rows = [row(length) for length in lengths]

    resonance = None
    if cavity.mirror_lambda is not None:
        resonance = empty_cavity_resonance(
            cavity.mirror_lambda, 0.5 * (cavity.length_min + cavity.length_max)
        )
    return SweepGrid(
        cavity=cavity,
        splitter=splitter,
        lengths=lengths,
        positions=positions,
        values=np.vstack(rows) / f0,
        f0=f0,
        resonance_length=resonance,
    )


__all__ = [
    "CONTOUR_CLASSES",
    "GRID_HEADER",
    "BeamSplitterSpec",
    "CavitySpec",
    "SweepGrid",
    "empty_cavity_resonance",
    "force_map",
]
