"""Self-consistent field of a stack of thin scatterers.

Between scatterers the field is a pair of counter-propagating plane waves,
E(z) = R·e^{ik(z−ζ)} + L·e^{−ik(z−ζ)}. Regions are numbered 0..N; region 0
is referenced at the first scatterer and region r ≥ 1 at scatterer r−1,
so region r is the one immediately right of scatterer r−1. Crossing
scatterer j maps the left amplitudes (re-referenced at z_j) to the right
ones through M(Λ) = [[1+iΛ, iΛ], [−iΛ, 1−iΛ]] (det M = 1), and a gap d
re-references amplitudes through P(d) = diag(e^{ikd}, e^{−ikd}).

The pump fixes R₀ (at the leftmost scatterer) and L_N (at the rightmost);
with T the total transfer matrix, L₀ = (L_N − T₂₁R₀)/T₂₂, where
|T₂₂| ≥ 1 for real Λ.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
from cachetools import LRUCache

from src.core.exceptions import IndexOutOfRange
from src.core.types import WAVELENGTH, WAVENUMBER, Stack
from src.core.validation import validate_stack

Side = Literal["left", "right"]

_SOLVE_CACHE: LRUCache[Stack, FieldSolution] = LRUCache(maxsize=512)
_SOLVE_LOCK = threading.Lock()


def bs_coefficients(lambda_param: float) -> tuple[complex, complex]:
    """Reflection and transmission amplitudes (r, t) of a lone scatterer.

    r = iΛ/(1−iΛ), t = 1/(1−iΛ); |r|² + |t|² = 1 for real Λ.
    """
    denominator = 1.0 - 1j * lambda_param
    return 1j * lambda_param / denominator, 1.0 / denominator


def bs_transfer_matrix(lambda_param: float | np.ndarray) -> np.ndarray:
    """Transfer matrix across one scatterer; batched over the shape of ``lambda_param``."""
    lam = 1j * np.asarray(lambda_param, dtype=float)
    matrix = np.empty(lam.shape + (2, 2), dtype=complex)
    matrix[..., 0, 0] = 1.0 + lam
    matrix[..., 0, 1] = lam
    matrix[..., 1, 0] = -lam
    matrix[..., 1, 1] = 1.0 - lam
    return matrix


def propagation_matrix(distance: float | np.ndarray) -> np.ndarray:
    """Re-referencing matrix diag(e^{ikd}, e^{−ikd}) over a gap ``distance``."""
    phase = np.exp(1j * WAVENUMBER * np.asarray(distance, dtype=float))
    matrix = np.zeros(phase.shape + (2, 2), dtype=complex)
    matrix[..., 0, 0] = phase
    matrix[..., 1, 1] = 1.0 / phase
    return matrix


def _step_matrices(positions: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """G_j = M_j·P(z_j − z_{j−1}) with G_0 = M_0, shape (B, N, 2, 2)."""
    batch, count = positions.shape
    steps = np.broadcast_to(bs_transfer_matrix(lambdas), (batch, count, 2, 2)).copy()
    if count > 1:
        steps[:, 1:] = steps[:, 1:] @ propagation_matrix(np.diff(positions, axis=1))
    return steps


def solve_batch(
    positions: np.ndarray,
    lambdas: np.ndarray,
    left: complex,
    right: complex,
) -> np.ndarray:
    """Region amplitudes for a batch of configurations sharing Λ and pump.

    No validation is done here; callers pass ordered, finite positions.

    Args:
        positions: Scatterer positions, shape (B, N).
        lambdas: Polarizabilities, shape (N,).
        left: Amplitude incident from the left.
        right: Amplitude incident from the right.

    Returns:
        Complex array of shape (B, N+1, 2) holding (R_r, L_r) per region.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    batch, count = positions.shape
    steps = _step_matrices(positions, np.asarray(lambdas, dtype=float))

    total = np.broadcast_to(np.eye(2, dtype=complex), (batch, 2, 2)).copy()
    for j in range(count):
        total = steps[:, j] @ total

    amplitudes = np.empty((batch, count + 1, 2), dtype=complex)
    amplitudes[:, 0, 0] = left
    amplitudes[:, 0, 1] = (right - total[:, 1, 0] * left) / total[:, 1, 1]
    for j in range(count):
        amplitudes[:, j + 1] = np.einsum("bij,bj->bi", steps[:, j], amplitudes[:, j])
    # Pin the prescribed incoming amplitude against roundoff.
    amplitudes[:, count, 1] = right
    return amplitudes


def region_references(positions: np.ndarray) -> np.ndarray:
    """Reference point of every region, (..., N+1): (z₀, z₀, z₁, …, z_{N−1})."""
    positions = np.asarray(positions, dtype=float)
    return np.concatenate([positions[..., :1], positions], axis=-1)


def local_amplitudes(amplitudes: np.ndarray, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Amplitudes just left and just right of each scatterer, referenced at it.

    Returns:
        ``(outer, inner)`` arrays of shape (B, N, 2): ``outer[:, j]`` is
        region j moved to z_j, ``inner[:, j]`` is region j+1.
    """
    positions = np.atleast_2d(positions)
    left_side = amplitudes[:, :-1].copy()
    if positions.shape[1] > 1:
        phase = np.exp(1j * WAVENUMBER * np.diff(positions, axis=1))
        left_side[:, 1:, 0] *= phase
        left_side[:, 1:, 1] /= phase
    return left_side, amplitudes[:, 1:]


class RegionAmplitudes(NamedTuple):
    """Plane-wave amplitudes of one region and the point they refer to."""

    rightward: complex
    leftward: complex
    reference: float


class Transmission(NamedTuple):
    """Intensity transmission and reflection for a unit left pump."""

    transmission: float
    reflection: float


@dataclass(frozen=True, eq=False)
class FieldSolution:
    """Solved region amplitudes of one stack (read-only arrays)."""

    stack: Stack
    amplitudes: np.ndarray

    @property
    def references(self) -> np.ndarray:
        return region_references(self.stack.positions)

    @property
    def regions(self) -> tuple[RegionAmplitudes, ...]:
        refs = self.references
        return tuple(
            RegionAmplitudes(complex(r), complex(left), float(ref))
            for (r, left), ref in zip(self.amplitudes, refs, strict=True)
        )

    def region(self, index: int) -> RegionAmplitudes:
        """Amplitudes of region ``index`` (0..N)."""
        if not 0 <= index <= len(self.stack):
            raise IndexOutOfRange(index, len(self.stack) + 1)
        return self.regions[index]

    def at_scatterer(self, index: int) -> tuple[complex, complex, complex, complex]:
        """(a, b, c, d): left-side and right-side amplitudes referenced at scatterer ``index``."""
        if not 0 <= index < len(self.stack):
            raise IndexOutOfRange(index, len(self.stack))
        outer, inner = local_amplitudes(self.amplitudes[None], self.stack.positions[None])
        a, b = outer[0, index]
        c, d = inner[0, index]
        return complex(a), complex(b), complex(c), complex(d)


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _solve_uncached(stack: Stack) -> FieldSolution:
    amplitudes = solve_batch(
        stack.positions[None], stack.lambdas, complex(stack.pump.left), complex(stack.pump.right)
    )[0]
    return FieldSolution(stack=stack, amplitudes=_freeze(amplitudes))


def solve(stack: Stack) -> FieldSolution:
    """Solve the self-consistent field of a stack.

    Results are memoised per stack; stacks are immutable, so a cached
    solution is always valid.

    Raises:
        StackValidationError: If the stack breaks a structural rule.
    """
    with _SOLVE_LOCK:
        cached = _SOLVE_CACHE.get(stack)
    if cached is not None:
        return cached
    validate_stack(stack)
    solution = _solve_uncached(stack)
    with _SOLVE_LOCK:
        _SOLVE_CACHE[stack] = solution
    return solution


def clear_cache() -> None:
    """Drop every memoised solution."""
    with _SOLVE_LOCK:
        _SOLVE_CACHE.clear()


def solve_direct(stack: Stack) -> FieldSolution:
    """Solve the matching conditions as one dense linear system.

    Unknowns are (R_r, L_r) for all N+1 regions; equations are the two
    pump conditions plus continuity of E and the jump
    ∂E(z_j⁺) − ∂E(z_j⁻) = −2kΛ_j·E(z_j) at each scatterer. Used as an
    independent check on :func:`solve`.
    """
    validate_stack(stack)
    positions = stack.positions
    lambdas = stack.lambdas
    count = len(stack)
    refs = region_references(positions)
    size = 2 * (count + 1)

    matrix = np.zeros((size, size), dtype=complex)
    rhs = np.zeros(size, dtype=complex)
    matrix[0, 0] = 1.0
    rhs[0] = stack.pump.left
    matrix[1, size - 1] = 1.0
    rhs[1] = stack.pump.right

    for j in range(count):
        left_region, right_region = j, j + 1
        ahead = np.exp(1j * WAVENUMBER * (positions[j] - refs[left_region]))
        row = 2 + 2 * j
        # Continuity.
        matrix[row, 2 * left_region] = ahead
        matrix[row, 2 * left_region + 1] = 1.0 / ahead
        matrix[row, 2 * right_region] = -1.0
        matrix[row, 2 * right_region + 1] = -1.0
        # Derivative jump, divided by ik.
        matrix[row + 1, 2 * right_region] = 1.0
        matrix[row + 1, 2 * right_region + 1] = -1.0
        matrix[row + 1, 2 * left_region] = -ahead
        matrix[row + 1, 2 * left_region + 1] = 1.0 / ahead
        # + (2Λ/i)·E(z_j), with E taken from the right-hand region.
        matrix[row + 1, 2 * right_region] += -2j * lambdas[j]
        matrix[row + 1, 2 * right_region + 1] += -2j * lambdas[j]

    amplitudes = np.linalg.solve(matrix, rhs).reshape(count + 1, 2)
    return FieldSolution(stack=stack, amplitudes=_freeze(amplitudes))


def total_transfer_matrix(stack: Stack) -> np.ndarray:
    """Product of every scatterer and gap matrix, mapping region 0 to region N."""
    steps = _step_matrices(stack.positions[None], stack.lambdas)[0]
    total = np.eye(2, dtype=complex)
    for step in steps:
        total = step @ total
    return total


def _region_index(solution: FieldSolution, z: np.ndarray, side: Side) -> np.ndarray:
    search_side = "right" if side == "right" else "left"
    return np.searchsorted(solution.stack.positions, z, side=search_side)


def _waves(solution: FieldSolution, z: float | np.ndarray, side: Side):
    z_arr = np.asarray(z, dtype=float)
    index = _region_index(solution, z_arr, side)
    phase = np.exp(1j * WAVENUMBER * (z_arr - solution.references[index]))
    forward = solution.amplitudes[index, 0] * phase
    backward = solution.amplitudes[index, 1] / phase
    return forward, backward


def field_at(solution: FieldSolution, z: float | np.ndarray, side: Side = "right"):
    """Complex field at ``z`` (scalar or array).

    At a scatterer position ``side`` picks the one-sided limit; the two
    agree because E is continuous.
    """
    forward, backward = _waves(solution, z, side)
    value = forward + backward
    return complex(value) if np.ndim(value) == 0 else value


def field_derivative_at(solution: FieldSolution, z: float | np.ndarray, side: Side = "right"):
    """Analytic ∂E/∂z at ``z``; discontinuous across scatterers."""
    forward, backward = _waves(solution, z, side)
    value = 1j * WAVENUMBER * (forward - backward)
    return complex(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True, eq=False)
class IntensityProfile:
    """|E(z)|² sampled on a uniform grid."""

    z: np.ndarray
    intensity: np.ndarray

    def __len__(self) -> int:
        return len(self.z)

    def rows(self) -> list[tuple[float, float]]:
        return [(float(z), float(i)) for z, i in zip(self.z, self.intensity, strict=True)]

    def peak(self) -> tuple[float, float]:
        """(z, |E|²) of the largest sample."""
        k = int(np.argmax(self.intensity))
        return float(self.z[k]), float(self.intensity[k])


def intensity_profile(
    solution: FieldSolution, z_min: float, z_max: float, n_points: int
) -> IntensityProfile:
    """Sample |E(z)|² at ``n_points`` evenly spaced points of [z_min, z_max]."""
    if n_points < 2:
        raise ValueError(f"n_points must be at least 2, got {n_points}")
    if not z_max > z_min:
        raise ValueError(f"Empty interval [{z_min}, {z_max}]")
    z = np.linspace(z_min, z_max, n_points)
    return IntensityProfile(z=z, intensity=np.abs(field_at(solution, z)) ** 2)


def region_peaks(
    amplitudes: np.ndarray,
    references: np.ndarray,
    starts: np.ndarray,
    ends: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact maximum of |R·e^{ik(z−ζ)} + L·e^{−ik(z−ζ)}|² over [start, end].

    All arguments broadcast; ``amplitudes`` has a trailing axis (R, L).

    Returns:
        ``(z_at_max, max_intensity)``.
    """
    forward = amplitudes[..., 0]
    backward = amplitudes[..., 1]
    mag_f, mag_b = np.abs(forward), np.abs(backward)
    offset = np.angle(forward) - np.angle(backward)
    base = mag_f**2 + mag_b**2
    swing = 2.0 * mag_f * mag_b

    def value(z: np.ndarray) -> np.ndarray:
        return base + swing * np.cos(2.0 * WAVENUMBER * (z - references) + offset)

    # First point ≥ start where the standing-wave phase is a multiple of 2π.
    phase_start = 2.0 * WAVENUMBER * (starts - references) + offset
    turns = np.ceil(phase_start / (2.0 * np.pi))
    crest = references + (2.0 * np.pi * turns - offset) / (2.0 * WAVENUMBER)
    interior = crest <= ends

    at_start, at_end = value(starts), value(ends)
    edge_z = np.where(at_start >= at_end, starts, ends)
    edge_value = np.maximum(at_start, at_end)
    z_best = np.where(interior, crest, edge_z)
    best = np.where(interior, (mag_f + mag_b) ** 2, edge_value)
    return z_best, best


def peak_intensity(solution: FieldSolution, z_min: float, z_max: float) -> tuple[float, float]:
    """Exact (z, |E|²) of the intensity maximum over [z_min, z_max]."""
    if not z_max > z_min:
        raise ValueError(f"Empty interval [{z_min}, {z_max}]")
    positions = solution.stack.positions
    bounds = np.concatenate([[-np.inf], positions, [np.inf]])
    starts = np.maximum(bounds[:-1], z_min)
    ends = np.minimum(bounds[1:], z_max)
    overlap = starts <= ends
    z_best, best = region_peaks(
        solution.amplitudes[overlap], solution.references[overlap], starts[overlap], ends[overlap]
    )
    k = int(np.argmax(best))
    return float(z_best[k]), float(best[k])


def stack_transmission(stack: Stack) -> Transmission:
    """Intensity transmission and reflection for a unit left pump.

    The stack's own pump is ignored. T + R = 1 for real Λ.
    """
    validate_stack(stack)
    amplitudes = solve_batch(stack.positions[None], stack.lambdas, 1.0, 0.0)[0]
    return Transmission(
        transmission=float(abs(amplitudes[-1, 0]) ** 2),
        reflection=float(abs(amplitudes[0, 1]) ** 2),
    )


def free_space_peak(pump_left: complex, pump_right: complex) -> float:
    """Peak of the empty standing wave, (|E_L| + |E_R|)²."""
    return float((abs(pump_left) + abs(pump_right)) ** 2)


def free_space_mean(pump_left: complex, pump_right: complex) -> float:
    """Spatial mean of the empty standing wave, |E_L|² + |E_R|²."""
    return float(abs(pump_left) ** 2 + abs(pump_right) ** 2)


__all__ = [
    "WAVELENGTH",
    "FieldSolution",
    "IntensityProfile",
    "RegionAmplitudes",
    "Transmission",
    "bs_coefficients",
    "bs_transfer_matrix",
    "clear_cache",
    "field_at",
    "field_derivative_at",
    "free_space_mean",
    "free_space_peak",
    "intensity_profile",
    "local_amplitudes",
    "peak_intensity",
    "propagation_matrix",
    "region_peaks",
    "region_references",
    "solve",
    "solve_batch",
    "solve_direct",
    "stack_transmission",
    "total_transfer_matrix",
]
