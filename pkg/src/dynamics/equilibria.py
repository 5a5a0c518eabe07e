"""Force-free configurations, their stability and lattice structure.

Scatterers listed in ``frozen`` never move (mirrors, anchors); the rest
follow the optical forces. Because the pumps are referenced at the outer
scatterers, a stack with nothing frozen is translation invariant and its
Jacobian always has the zero mode along (1, …, 1); that mode is removed
before stability is judged.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from src.core.exceptions import (
    MaxStepsExceeded,
    NoConvergence,
    NotIdenticalClouds,
    StepCausesCrossing,
)
from src.core.types import MIN_GAP, WAVELENGTH, Stack
from src.core.validation import validate_stack
from src.optics.field_solver import FieldSolution, local_amplitudes, solve, solve_batch
from src.optics.forces import force_jacobian, forces_from_amplitudes, mobile_mask

# Eigenvalues with |Re| below this are treated as zero.
STABILITY_TOLERANCE = 1e-8

LATTICE_HEADER = ("j", "gap", "chi")


class Stability(enum.StrEnum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """A (possibly non-converged) force-free configuration."""

    stack: Stack
    frozen: tuple[int, ...]
    residual: float
    converged: bool
    iterations: int
    method: str
    stability: Stability | None = None
    eigenvalues: tuple[complex, ...] = ()
    envelope_flatness: float = math.nan

    @property
    def mobile(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(mobile_mask(len(self.stack), self.frozen)))

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "stability": None if self.stability is None else self.stability.value,
            "eigenvalues": [[float(e.real), float(e.imag)] for e in self.eigenvalues],
            "envelope_flatness": self.envelope_flatness,
            "frozen": list(self.frozen),
            "positions": [float(z) for z in self.stack.positions],
        }


def _mobile_indices(count: int, frozen: Sequence[int]) -> np.ndarray:
    return np.flatnonzero(mobile_mask(count, frozen))


def _batch_forces(stack: Stack, positions: np.ndarray) -> np.ndarray:
    amplitudes = solve_batch(
        positions, stack.lambdas, complex(stack.pump.left), complex(stack.pump.right)
    )
    return forces_from_amplitudes(amplitudes)


def _forces_at(stack: Stack, positions: np.ndarray) -> np.ndarray:
    return _batch_forces(stack, positions[None])[0]


def _ordered(positions: np.ndarray) -> bool:
    return bool(np.all(np.diff(positions) >= MIN_GAP))


def envelope_flatness(solution: FieldSolution, frozen: Sequence[int] = ()) -> float:
    """Largest change of |R| and |L| across runs of consecutive mobile scatterers.

    With nothing frozen this is max over regions of
    | |R_j| − |R₀| | + | |L_j| − |L_N| |. It vanishes at any equilibrium of
    identical mobile scatterers, whatever the pump imbalance.
    """
    count = len(solution.stack)
    mobile = mobile_mask(count, frozen)
    magnitudes = np.abs(solution.amplitudes)
    worst = 0.0
    j = 0
    while j < count:
        if not mobile[j]:
            j += 1
            continue
        start = j
        while j + 1 < count and mobile[j + 1]:
            j += 1
        # Regions start..j+1 border the run of mobile scatterers start..j.
        block = magnitudes[start : j + 2]
        spread = np.abs(block[:, 0] - block[0, 0]) + np.abs(block[:, 1] - block[-1, 1])
        worst = max(worst, float(np.max(spread)))
        j += 1
    return worst


def _translation_free_basis(size: int) -> np.ndarray:
    """Orthonormal basis of the complement of (1, …, 1)/√size."""
    return null_space(np.ones((1, size)) / math.sqrt(size))


def classify_stability(
    equilibrium: Equilibrium, step: float = 1e-6
) -> tuple[Stability, tuple[complex, ...]]:
    """Stability of an equilibrium from the eigenvalues of the mobile Jacobian.

    Stable when every eigenvalue has Re < −1e-8, unstable when one has
    Re > 1e-8, marginal otherwise. With nothing frozen the translation
    mode is projected out first.
    """
    mobile = _mobile_indices(len(equilibrium.stack), equilibrium.frozen)
    if len(mobile) == 0:
        return Stability.MARGINAL, ()
    jacobian = force_jacobian(equilibrium.stack, step=step, indices=mobile)
    if not equilibrium.frozen:
        if len(mobile) == 1:
            return Stability.MARGINAL, ()
        basis = _translation_free_basis(len(mobile))
        jacobian = basis.T @ jacobian @ basis

    eigenvalues = tuple(complex(e) for e in np.linalg.eigvals(jacobian))
    real_parts = np.array([e.real for e in eigenvalues])
    if np.all(real_parts < -STABILITY_TOLERANCE):
        return Stability.STABLE, eigenvalues
    if np.any(real_parts > STABILITY_TOLERANCE):
        return Stability.UNSTABLE, eigenvalues
    return Stability.MARGINAL, eigenvalues


def _finish(
    stack: Stack,
    frozen: tuple[int, ...],
    residual: float,
    converged: bool,
    iterations: int,
    method: str,
) -> Equilibrium:
    draft = Equilibrium(
        stack=stack,
        frozen=frozen,
        residual=residual,
        converged=converged,
        iterations=iterations,
        method=method,
    )
    try:
        stability, eigenvalues = classify_stability(draft)
    except StepCausesCrossing:
        stability, eigenvalues = None, ()
    return Equilibrium(
        stack=stack,
        frozen=frozen,
        residual=residual,
        converged=converged,
        iterations=iterations,
        method=method,
        stability=stability,
        eigenvalues=eigenvalues,
        envelope_flatness=envelope_flatness(solve(stack), frozen),
    )


def relax(
    stack: Stack,
    frozen: Sequence[int] = (),
    dt: float = 0.1,
    max_steps: int = 20000,
    tol: float = 1e-10,
    max_move: float = 0.02,
    max_dt: float = 5.0,
) -> Equilibrium:
    """Overdamped relaxation ż = F of the mobile scatterers.

    Each step moves a scatterer by at most ``max_move``. A step that would
    reorder scatterers, or that more than doubles the largest force, is
    undone and ``dt`` halved; otherwise ``dt`` grows by 20 % up to
    ``max_dt``.

    Raises:
        MaxStepsExceeded: With the best configuration reached as ``best``.
    """
    validate_stack(stack)
    frozen = tuple(sorted(set(frozen)))
    mobile = _mobile_indices(len(stack), frozen)
    positions = stack.positions
    forces = _forces_at(stack, positions)[mobile]
    residual = float(np.max(np.abs(forces), initial=0.0))
    best_positions, best_residual = positions.copy(), residual

    for step in range(max_steps):
        if residual < tol:
            return _finish(stack.with_positions(positions), frozen, residual, True, step, "relax")

        displacement = dt * forces
        largest = float(np.max(np.abs(displacement)))
        if largest > max_move:
            displacement *= max_move / largest
        trial = positions.copy()
        trial[mobile] += displacement
        if not _ordered(trial):
            dt *= 0.5
            continue
        trial_forces = _forces_at(stack, trial)[mobile]
        trial_residual = float(np.max(np.abs(trial_forces)))
        if trial_residual > 2.0 * residual:
            dt *= 0.5
            continue

        positions, forces, residual = trial, trial_forces, trial_residual
        dt = min(dt * 1.2, max_dt)
        if residual < best_residual:
            best_positions, best_residual = positions.copy(), residual

    if residual < tol:
        return _finish(stack.with_positions(positions), frozen, residual, True, max_steps, "relax")
    best = _finish(
        stack.with_positions(best_positions), frozen, best_residual, False, max_steps, "relax"
    )
    raise MaxStepsExceeded(
        f"Relaxation did not reach {tol:g} within {max_steps} steps "
        f"(best residual {best_residual:.3g})",
        best=best,
        details={"max_steps": max_steps, "residual": best_residual},
    )


def _newton(
    stack: Stack,
    mobile: np.ndarray,
    positions: np.ndarray,
    tol: float,
    max_iter: int,
    step: float,
    max_move: float,
) -> tuple[np.ndarray, float, int, bool]:
    """Damped Newton iteration; returns (positions, residual, iterations, diverged)."""
    forces = _forces_at(stack, positions)[mobile]
    residual = float(np.max(np.abs(forces), initial=0.0))
    for iteration in range(max_iter):
        if residual < tol:
            return positions, residual, iteration, False
        try:
            jacobian = force_jacobian(stack.with_positions(positions), step=step, indices=mobile)
        except StepCausesCrossing:
            return positions, residual, iteration, True
        # lstsq copes with the singular translation mode.
        delta = np.linalg.lstsq(jacobian, -forces, rcond=None)[0]
        largest = float(np.max(np.abs(delta)))
        if largest > max_move:
            delta *= max_move / largest

        for _ in range(12):
            trial = positions.copy()
            trial[mobile] += delta
            if _ordered(trial):
                trial_forces = _forces_at(stack, trial)[mobile]
                trial_residual = float(np.max(np.abs(trial_forces)))
                if trial_residual < residual:
                    positions, forces, residual = trial, trial_forces, trial_residual
                    break
            delta *= 0.5
        else:
            return positions, residual, iteration + 1, True
    return positions, residual, max_iter, residual >= tol


def find_equilibrium(
    guess: Stack,
    frozen: Sequence[int] = (),
    tol: float = 1e-12,
    max_iter: int = 50,
    step: float = 1e-6,
    max_move: float = 0.05,
    max_steps: int = 20000,
) -> Equilibrium:
    """Newton search for a force-free configuration near ``guess``.

    When Newton stalls, an overdamped relaxation (``max_steps`` steps, same
    tolerance floor of 1e-10) is run from the best point and Newton is
    tried once more from where it ends.

    Raises:
        NoConvergence: With the best configuration reached as ``best``.
    """
    validate_stack(guess)
    frozen = tuple(sorted(set(frozen)))
    mobile = _mobile_indices(len(guess), frozen)
    positions, residual, iterations, diverged = _newton(
        guess, mobile, guess.positions, tol, max_iter, step, max_move
    )
    method = "newton"

    if diverged:
        method = "newton+relax"
        try:
            relaxed = relax(
                guess.with_positions(positions),
                frozen=frozen,
                max_steps=max_steps,
                tol=max(tol, 1e-10),
            )
            start = relaxed.stack.positions
        except MaxStepsExceeded as e:
            start = e.best.stack.positions if e.best is not None else positions
        positions, residual, more, _ = _newton(
            guess, mobile, start, tol, max_iter, step, max_move
        )
        iterations += more

    if residual < tol:
        return _finish(guess.with_positions(positions), frozen, residual, True, iterations, method)
    best = _finish(guess.with_positions(positions), frozen, residual, False, iterations, method)
    raise NoConvergence(
        f"No equilibrium within {tol:g} after {iterations} iterations "
        f"(best residual {residual:.3g})",
        best=best,
        details={"max_iter": max_iter, "residual": residual},
    )


def _wrap(angle: float) -> float:
    """Map an angle to (−π, π]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True, eq=False)
class LatticeReport:
    """Spacings and phase slips of the mobile scatterers of an equilibrium."""

    spacings: tuple[float, ...]
    reduced_spacings: tuple[float, ...]
    phase_slips: tuple[float, ...]
    mean_phase_slip: float
    predicted_constant: float
    lambda_param: float
    indices: tuple[int, ...] = ()
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_param,
            "spacings": list(self.spacings),
            "reduced_spacings": list(self.reduced_spacings),
            "phase_slips": list(self.phase_slips),
            "mean_phase_slip": self.mean_phase_slip,
            "predicted_constant": self.predicted_constant,
        }

    def rows(self) -> list[tuple[int, float, float]]:
        """One row per mobile scatterer, in ``LATTICE_HEADER`` order.

        The gap is measured to the previous mobile scatterer; the first has none
        and gets NaN.
        """
        gaps = (math.nan, *self.spacings)
        return [
            (j, float(gap), float(chi))
            for j, gap, chi in zip(self.indices, gaps, self.phase_slips, strict=True)
        ]


def phase_slips(solution: FieldSolution, indices: Sequence[int]) -> np.ndarray:
    """Phase slip χ_j = wrap(arg(c·d*) − arg(a·b*))/2 at each listed scatterer."""
    stack = solution.stack
    outer, inner = local_amplitudes(solution.amplitudes[None], stack.positions[None])
    slips = []
    for j in indices:
        a, b = outer[0, j]
        c, d = inner[0, j]
        left_phase = np.angle(a * np.conj(b))
        right_phase = np.angle(c * np.conj(d))
        slips.append(_wrap(float(right_phase - left_phase)) / 2.0)
    return np.array(slips)


def lattice_report(equilibrium: Equilibrium) -> LatticeReport:
    """Lattice constant predicted from the phase slip, versus the actual spacings.

    The prediction is d = (π − χ)/k. Spacings are only fixed modulo λ/2,
    so ``reduced_spacings`` brings each actual gap to within λ/4 of it.

    Raises:
        NotIdenticalClouds: If the mobile scatterers do not share one Λ.
    """
    mobile = list(equilibrium.mobile)
    lambdas = equilibrium.stack.lambdas[mobile]
    if len(mobile) == 0 or not np.allclose(lambdas, lambdas[0], rtol=0.0, atol=1e-12):
        raise NotIdenticalClouds(
            "Lattice analysis needs mobile scatterers with one common polarizability",
            details={"lambdas": [float(x) for x in lambdas]},
        )

    slips = phase_slips(solve(equilibrium.stack), mobile)
    mean_slip = float(np.mean(slips))
    predicted = (math.pi - mean_slip) * WAVELENGTH / (2.0 * math.pi)
    half = WAVELENGTH / 2.0
    spacings = np.diff(equilibrium.stack.positions[mobile])
    reduced = spacings - half * np.round((spacings - predicted) / half)

    notes = []
    if not equilibrium.converged:
        notes.append("equilibrium did not converge")
    return LatticeReport(
        spacings=tuple(float(s) for s in spacings),
        reduced_spacings=tuple(float(s) for s in reduced),
        phase_slips=tuple(float(s) for s in slips),
        mean_phase_slip=mean_slip,
        predicted_constant=predicted,
        lambda_param=float(lambdas[0]),
        indices=tuple(int(j) for j in mobile),
        notes=notes,
    )


@dataclass(frozen=True)
class ZeroCrossing:
    """Sign change of a sampled function, located by linear interpolation."""

    position: float
    descending: bool


def zero_crossings(xs: np.ndarray, values: np.ndarray) -> list[ZeroCrossing]:
    """Sign changes of ``values`` sampled at increasing ``xs``.

    A descending crossing (positive to negative) of a force is a stable
    equilibrium of a single mobile scatterer.
    A sample that touches zero without a sign change is not a crossing.
    """
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    crossings = []
    # Samples that are exactly zero are skipped over; a run of them between
    # opposite signs is one crossing at the middle of the run.
    nonzero = np.flatnonzero(np.sign(values) != 0)
    for p, q in zip(nonzero[:-1], nonzero[1:], strict=True):
        f0, f1 = values[p], values[q]
        if not f0 * f1 <= 0:
            continue
        if q == p + 1:
            x0, x1 = xs[p], xs[q]
            position = x0 - f0 * (x1 - x0) / (f1 - f0)
        else:
            position = 0.5 * (xs[p + 1] + xs[q - 1])
        crossings.append(ZeroCrossing(float(position), bool(f0 > f1)))
    return crossings


__all__ = [
    "LATTICE_HEADER",
    "Equilibrium",
    "LatticeReport",
    "Stability",
    "ZeroCrossing",
    "classify_stability",
    "envelope_flatness",
    "find_equilibrium",
    "lattice_report",
    "phase_slips",
    "relax",
    "zero_crossings",
]
