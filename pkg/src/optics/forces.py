"""Optical forces and dipole energies on scatterers.

Two independent force expressions are kept side by side. The momentum
balance form takes the net flux difference of the regions on either side,

    F_j = ½(|R_j|² + |L_j|² − |R_{j+1}|² − |L_{j+1}|²),

and the field-gradient form takes the average gradient at the scatterer,

    F_j = −Λ_j·(Im(a·b*) + Im(c·d*)),

with (a, b) and (c, d) the amplitudes on the two sides referenced at z_j.
They agree identically; comparing them is a check on the field solution.
Forces are in units of ε₀|E_in|²/2, positive along +z.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from src.core.exceptions import IndexOutOfRange, StepCausesCrossing
from src.core.types import MIN_GAP, WAVENUMBER, Stack
from src.core.validation import validate_stack
from src.optics.field_solver import FieldSolution, local_amplitudes, solve, solve_batch


def forces_from_amplitudes(amplitudes: np.ndarray) -> np.ndarray:
    """Momentum-balance forces for a batch of solutions, shape (B, N)."""
    power = np.sum(np.abs(amplitudes) ** 2, axis=-1)
    return 0.5 * (power[:, :-1] - power[:, 1:])


def gradient_forces_from_amplitudes(
    amplitudes: np.ndarray, positions: np.ndarray, lambdas: np.ndarray
) -> np.ndarray:
    """Field-gradient forces for a batch of solutions, shape (B, N)."""
    outer, inner = local_amplitudes(amplitudes, positions)
    left_term = np.imag(outer[..., 0] * np.conj(outer[..., 1]))
    right_term = np.imag(inner[..., 0] * np.conj(inner[..., 1]))
    return -np.asarray(lambdas) * (left_term + right_term)


def energies_from_amplitudes(amplitudes: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """Dipole energies U_j = −(Λ_j/2k)|E(z_j)|², shape (B, N)."""
    field = amplitudes[:, 1:, 0] + amplitudes[:, 1:, 1]
    return -np.asarray(lambdas) / (2.0 * WAVENUMBER) * np.abs(field) ** 2


def _check_index(solution: FieldSolution, index: int) -> None:
    if not 0 <= index < len(solution.stack):
        raise IndexOutOfRange(index, len(solution.stack))


def force_vector(solution: FieldSolution) -> np.ndarray:
    """Momentum-balance force on every scatterer."""
    return forces_from_amplitudes(solution.amplitudes[None])[0]


def gradient_force_vector(solution: FieldSolution) -> np.ndarray:
    """Field-gradient force on every scatterer."""
    stack = solution.stack
    return gradient_forces_from_amplitudes(
        solution.amplitudes[None], stack.positions[None], stack.lambdas
    )[0]


def force_eq6(solution: FieldSolution, index: int) -> float:
    """Force on scatterer ``index`` from the momentum flux on its two sides."""
    _check_index(solution, index)
    return float(force_vector(solution)[index])


def force_eq5(solution: FieldSolution, index: int) -> float:
    """Force on scatterer ``index`` from the average field gradient at it."""
    _check_index(solution, index)
    return float(gradient_force_vector(solution)[index])


def momentum_flux(solution: FieldSolution) -> float:
    """Net momentum flux into the stack, ½(|R₀|²+|L₀|²−|R_N|²−|L_N|²)."""
    first, last = solution.amplitudes[0], solution.amplitudes[-1]
    return 0.5 * float(np.sum(np.abs(first) ** 2) - np.sum(np.abs(last) ** 2))


def momentum_residual(solution: FieldSolution) -> float:
    """Σ forces minus the net incoming momentum flux; zero up to roundoff."""
    return float(np.sum(force_vector(solution))) - momentum_flux(solution)


def dipole_energy(solution: FieldSolution, index: int) -> float:
    """U = −(Λ/2k)|E(z_j)|² for scatterer ``index``."""
    _check_index(solution, index)
    return float(energies_from_amplitudes(solution.amplitudes[None], solution.stack.lambdas)[0, index])


@dataclass(frozen=True, eq=False)
class EnergyReport:
    """Per-scatterer dipole energies and their sum."""

    per_scatterer: np.ndarray
    total: float

    def subtotal(self, indices: Sequence[int]) -> float:
        return float(np.sum(self.per_scatterer[list(indices)]))


def energy_report(solution: FieldSolution) -> EnergyReport:
    energies = energies_from_amplitudes(solution.amplitudes[None], solution.stack.lambdas)[0]
    return EnergyReport(per_scatterer=energies, total=float(np.sum(energies)))


FORCE_REPORT_HEADER = ("index", "position", "lambda", "force_eq6", "force_eq5", "energy")


@dataclass(frozen=True, eq=False)
class ForceReport:
    """Both force expressions and the dipole energy for every scatterer of a stack."""

    stack: Stack
    force_eq6: np.ndarray
    force_eq5: np.ndarray
    energies: EnergyReport
    momentum_residual: float

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(np.abs(self.force_eq6 - self.force_eq5)))

    @property
    def total_force(self) -> float:
        return float(np.sum(self.force_eq6))

    def rows(self) -> list[tuple[int, float, float, float, float, float]]:
        """One row per scatterer, in ``FORCE_REPORT_HEADER`` order."""
        return [
            (j, float(z), float(lam), float(f6), float(f5), float(u))
            for j, (z, lam, f6, f5, u) in enumerate(
                zip(
                    self.stack.positions,
                    self.stack.lambdas,
                    self.force_eq6,
                    self.force_eq5,
                    self.energies.per_scatterer,
                    strict=True,
                )
            )
        ]


def force_report(stack: Stack) -> ForceReport:
    """Solve once and report both force expressions plus the momentum residual.

    Raises:
        StackValidationError: If the stack breaks a structural rule.
    """
    solution = solve(stack)
    return ForceReport(
        stack=stack,
        force_eq6=force_vector(solution),
        force_eq5=gradient_force_vector(solution),
        energies=energy_report(solution),
        momentum_residual=momentum_residual(solution),
    )


def mobile_mask(count: int, frozen: Sequence[int] = ()) -> np.ndarray:
    """Boolean mask of scatterers that are free to move."""
    mask = np.ones(count, dtype=bool)
    mask[list(frozen)] = False
    return mask


def mobile_energy(stack: Stack, frozen: Sequence[int] = ()) -> float:
    """Summed dipole energy of the scatterers not listed in ``frozen``."""
    validate_stack(stack)
    amplitudes = solve_batch(
        stack.positions[None], stack.lambdas, complex(stack.pump.left), complex(stack.pump.right)
    )
    energies = energies_from_amplitudes(amplitudes, stack.lambdas)[0]
    return float(np.sum(energies[mobile_mask(len(stack), frozen)]))


def _check_step(stack: Stack, index: int, step: float) -> None:
    positions = stack.positions
    for neighbour in (index - 1, index + 1):
        if 0 <= neighbour < len(positions):
            gap = abs(positions[index] - positions[neighbour])
            if gap <= step + MIN_GAP:
                raise StepCausesCrossing(index, step, gap)


def energy_gradient(
    stack: Stack, index: int, step: float = 1e-7, frozen: Sequence[int] = ()
) -> float:
    """Central-difference derivative of :func:`mobile_energy` w.r.t. z_index."""
    validate_stack(stack)
    if not 0 <= index < len(stack):
        raise IndexOutOfRange(index, len(stack))
    _check_step(stack, index, step)
    positions = np.tile(stack.positions, (2, 1))
    positions[0, index] += step
    positions[1, index] -= step
    amplitudes = solve_batch(
        positions, stack.lambdas, complex(stack.pump.left), complex(stack.pump.right)
    )
    energies = energies_from_amplitudes(amplitudes, stack.lambdas)
    totals = energies[:, mobile_mask(len(stack), frozen)].sum(axis=1)
    return float((totals[0] - totals[1]) / (2.0 * step))


def force_jacobian(
    stack: Stack, step: float = 1e-6, indices: Sequence[int] | None = None
) -> np.ndarray:
    """Central-difference Jacobian J[m][l] = ∂F_m/∂z_l.

    All 2·len(indices) displaced configurations are solved in one batch.

    Args:
        stack: Configuration to linearise about.
        step: Displacement applied to each coordinate.
        indices: Coordinates (and force rows) to include; all by default.

    Raises:
        StepCausesCrossing: If a displacement would reach a neighbour.
    """
    validate_stack(stack)
    columns = list(range(len(stack))) if indices is None else [int(i) for i in indices]
    for index in columns:
        if not 0 <= index < len(stack):
            raise IndexOutOfRange(index, len(stack))
        _check_step(stack, index, step)
    if not columns:
        return np.zeros((0, 0))

    base = stack.positions
    positions = np.tile(base, (2 * len(columns), 1))
    for k, index in enumerate(columns):
        positions[2 * k, index] += step
        positions[2 * k + 1, index] -= step
    amplitudes = solve_batch(
        positions, stack.lambdas, complex(stack.pump.left), complex(stack.pump.right)
    )
    forces = forces_from_amplitudes(amplitudes)[:, columns]
    return ((forces[0::2] - forces[1::2]) / (2.0 * step)).T


__all__ = [
    "FORCE_REPORT_HEADER",
    "EnergyReport",
    "ForceReport",
    "dipole_energy",
    "energies_from_amplitudes",
    "energy_gradient",
    "energy_report",
    "force_eq5",
    "force_eq6",
    "force_jacobian",
    "force_report",
    "force_vector",
    "forces_from_amplitudes",
    "gradient_force_vector",
    "gradient_forces_from_amplitudes",
    "mobile_energy",
    "mobile_mask",
    "momentum_flux",
    "momentum_residual",
]
