"""Metropolis annealing of the dipole energy of a stack.

Single-scatterer moves are scored in O(1) from prefix and suffix products
of the 2×2 step matrices together with Hermitian running sums of the
per-scatterer intensity forms. Proposals visit scatterers left to right,
so the prefix data can be advanced after every visit while the suffix data,
rebuilt once per sweep, stays valid to the right of the current scatterer.
That keeps a sweep at O(N). The bookkeeping is plain Python complex
arithmetic, which beats numpy dispatch for 2×2 work.

The minimised objective is the dipole energy of the mobile scatterers.
"""

from __future__ import annotations

import cmath
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from src.core.exceptions import NoSlabStructure
from src.core.types import MIN_GAP, WAVENUMBER, Stack
from src.core.validation import validate_stack
from src.optics.field_solver import peak_intensity, solve
from src.optics.forces import mobile_energy, mobile_mask

# Accepted moves between full recomputations of the energy.
SPOT_CHECK_INTERVAL = 100

TRACE_HEADER = ("sweep", "energy", "acceptance_rate")
FINAL_HEADER = ("j", "position", "gap", "intensity")

Matrix = tuple[complex, complex, complex, complex]
Vector = tuple[complex, complex]
Form = tuple[float, complex, float]

_IDENTITY: Matrix = (1.0 + 0j, 0j, 0j, 1.0 + 0j)
_ZERO_FORM: Form = (0.0, 0j, 0.0)


def _mul(x: Matrix, y: Matrix) -> Matrix:
    a, b, c, d = x
    e, f, g, h = y
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def _apply(m: Matrix, v: Vector) -> Vector:
    return (m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1])


def _inverse(m: Matrix) -> Matrix:
    # Every step matrix is unimodular.
    return (m[3], -m[1], -m[2], m[0])


def _step(lambda_param: float, gap: float | None) -> Matrix:
    """M(Λ)·P(gap); the first scatterer has no gap to its left."""
    il = 1j * lambda_param
    if gap is None:
        return (1.0 + il, il, -il, 1.0 - il)
    phase = cmath.exp(1j * WAVENUMBER * gap)
    return ((1.0 + il) * phase, il / phase, -il * phase, (1.0 - il) / phase)


def _add_row(form: Form, weight: float, m: Matrix) -> Form:
    """form + weight·wᴴw, with w the column sums of ``m`` (the map to E)."""
    if weight == 0.0:
        return form
    w0, w1 = m[0] + m[2], m[1] + m[3]
    return (
        form[0] + weight * abs(w0) ** 2,
        form[1] + weight * w0.conjugate() * w1,
        form[2] + weight * abs(w1) ** 2,
    )


def _quadratic(form: Form, v: Vector) -> float:
    return (
        form[0] * abs(v[0]) ** 2
        + form[2] * abs(v[1]) ** 2
        + 2.0 * (v[0].conjugate() * form[1] * v[1]).real
    )


class _EnergyBook:
    """Incremental dipole-energy bookkeeping for one configuration."""

    def __init__(self, stack: Stack, weights: list[float]) -> None:
        self.positions = [float(z) for z in stack.positions]
        self.lambdas = [float(x) for x in stack.lambdas]
        self.weights = weights
        self.left = complex(stack.pump.left)
        self.right = complex(stack.pump.right)
        self.count = len(self.positions)
        self.steps = [self._step_at(j, self.positions[j]) for j in range(self.count)]

    def _step_at(self, j: int, z: float, left_z: float | None = None) -> Matrix:
        if j == 0:
            return _step(self.lambdas[0], None)
        anchor = self.positions[j - 1] if left_z is None else left_z
        return _step(self.lambdas[j], z - anchor)

    def begin_sweep(self) -> None:
        """Rebuild suffix products and right-hand forms; reset the prefix side."""
        n = self.count
        self.suffix: list[Matrix] = [_IDENTITY] * (n + 1)
        for k in range(n - 1, -1, -1):
            self.suffix[k] = _mul(self.suffix[k + 1], self.steps[k])
        self.right_forms: list[Form] = [_ZERO_FORM] * (n + 1)
        for k in range(n - 1, -1, -1):
            self.right_forms[k] = _add_row(
                self.right_forms[k + 1], self.weights[k], _inverse(self.suffix[k + 1])
            )
        self.prefix: Matrix = _IDENTITY
        self.left_form: Form = _ZERO_FORM

    def advance(self, j: int) -> None:
        """Fold scatterer ``j`` (at its current position) into the prefix side."""
        self.prefix = _mul(self.steps[j], self.prefix)
        self.left_form = _add_row(self.left_form, self.weights[j], self.prefix)

    def trial(self, j: int, z: float) -> tuple[float, Matrix, Matrix | None]:
        """Energy with scatterer ``j`` moved to ``z``; also the two new step matrices."""
        step_j = self._step_at(j, z)
        total = _mul(step_j, self.prefix)
        step_next = None
        if j + 1 < self.count:
            step_next = self._step_at(j + 1, self.positions[j + 1], left_z=z)
            total = _mul(step_next, total)
            total = _mul(self.suffix[j + 2], total)

        r0 = self.left
        v0 = (r0, (self.right - total[2] * r0) / total[3])
        vn = _apply(total, v0)

        inner = _apply(self.prefix, v0)
        after_j = _apply(step_j, inner)
        sum_terms = _quadratic(self.left_form, v0)
        sum_terms += self.weights[j] * abs(after_j[0] + after_j[1]) ** 2
        if step_next is not None:
            after_next = _apply(step_next, after_j)
            sum_terms += self.weights[j + 1] * abs(after_next[0] + after_next[1]) ** 2
            sum_terms += _quadratic(self.right_forms[j + 2], vn)
        return -sum_terms / (2.0 * WAVENUMBER), step_j, step_next

    def commit(self, j: int, z: float, step_j: Matrix, step_next: Matrix | None) -> None:
        self.positions[j] = z
        self.steps[j] = step_j
        if step_next is not None:
            self.steps[j + 1] = step_next


@dataclass(frozen=True)
class AnnealSchedule:
    """Annealing parameters.

    ``initial_temperature`` None means 10·|U₀|/N_mobile, with U₀ the starting
    energy. Temperature after sweep s is T₀·cooling_factor^s.
    """

    initial_temperature: float | None = None
    cooling_factor: float = 0.999
    sweeps: int = 20000
    move_scale: float = 0.05

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AnnealSchedule:
        defaults = cls()
        return cls(
            initial_temperature=data.get("initial_temperature", defaults.initial_temperature),
            cooling_factor=data.get("cooling_factor", defaults.cooling_factor),
            sweeps=data.get("sweeps", defaults.sweeps),
            move_scale=data.get("move_scale", defaults.move_scale),
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class MinimizationResult:
    """Outcome of one annealing or greedy run.

    ``final_stack`` is the lowest-energy configuration visited, so
    ``final_energy <= initial_energy`` always holds.
    """

    final_stack: Stack
    frozen: tuple[int, ...]
    energy_trace: np.ndarray
    acceptance_trace: np.ndarray
    initial_energy: float
    final_energy: float
    accepted_moves: int
    bookkeeping_error: float
    schedule: AnnealSchedule
    seed: int

    @property
    def local_spacings(self) -> np.ndarray:
        return self.final_stack.gaps

    @property
    def intensities(self) -> np.ndarray:
        """|E(z_j)|² at every scatterer of the final configuration."""
        amplitudes = solve(self.final_stack).amplitudes
        return np.abs(amplitudes[1:, 0] + amplitudes[1:, 1]) ** 2

    def summary(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "initial_energy": self.initial_energy,
            "final_energy": self.final_energy,
            "accepted_moves": self.accepted_moves,
            "bookkeeping_error": self.bookkeeping_error,
            "schedule": self.schedule.to_dict(),
        }

    def trace_rows(self) -> list[tuple[int, float, float]]:
        """One row per sweep, in ``TRACE_HEADER`` order."""
        return [
            (sweep, float(energy), float(rate))
            for sweep, (energy, rate) in enumerate(
                zip(self.energy_trace, self.acceptance_trace, strict=True)
            )
        ]

    def final_rows(self) -> list[tuple[int, float, float, float]]:
        """One row per scatterer, in ``FINAL_HEADER`` order.

        The gap is z_j − z_{j−1}; the first scatterer has none and gets NaN.
        """
        gaps = np.concatenate(([math.nan], self.local_spacings))
        return [
            (j, float(z), float(gap), float(intensity))
            for j, (z, gap, intensity) in enumerate(
                zip(self.final_stack.positions, gaps, self.intensities, strict=True)
            )
        ]


def _metropolis(
    stack: Stack,
    frozen: Sequence[int],
    temperatures: np.ndarray,
    move_scale: float,
    seed: int,
    schedule: AnnealSchedule,
    greedy: bool,
) -> MinimizationResult:
    validate_stack(stack)
    frozen = tuple(sorted(set(frozen)))
    mask = mobile_mask(len(stack), frozen)
    weights = [float(lam) if free else 0.0 for lam, free in zip(stack.lambdas, mask, strict=True)]
    book = _EnergyBook(stack, weights)
    rng = np.random.default_rng(seed)

    initial_energy = mobile_energy(stack, frozen)
    current = initial_energy
    # Bookkept energy of the last accepted move; spot checks leave it alone.
    recorded = initial_energy
    best_energy, best_positions = current, list(book.positions)
    accepted = 0
    since_check = 0
    worst_drift = 0.0
    energy_trace = np.empty(len(temperatures))
    acceptance_trace = np.empty(len(temperatures))
    n = book.count
    mobile_count = max(1, int(mask.sum()))

    for sweep, temperature in enumerate(temperatures):
        kicks = rng.normal(scale=move_scale, size=n)
        draws = rng.random(size=n)
        book.begin_sweep()
        accepted_here = 0
        for j in range(n):
            if mask[j]:
                z_new = book.positions[j] + float(kicks[j])
                low = book.positions[j - 1] + MIN_GAP if j > 0 else -math.inf
                high = book.positions[j + 1] - MIN_GAP if j + 1 < n else math.inf
                if low < z_new < high:
                    energy, step_j, step_next = book.trial(j, z_new)
                    delta = energy - current
                    if greedy:
                        accept = delta < 0.0 and energy < recorded
                    else:
                        accept = delta <= 0.0 or (
                            temperature > 0.0 and draws[j] < math.exp(-delta / temperature)
                        )
                    if accept:
                        book.commit(j, z_new, step_j, step_next)
                        current = recorded = energy
                        accepted += 1
                        accepted_here += 1
                        since_check += 1
                        if since_check >= SPOT_CHECK_INTERVAL:
                            since_check = 0
                            exact = mobile_energy(stack.with_positions(book.positions), frozen)
                            worst_drift = max(worst_drift, abs(exact - current))
                            current = exact
                        if current < best_energy:
                            best_energy, best_positions = current, list(book.positions)
            book.advance(j)
        energy_trace[sweep] = recorded
        acceptance_trace[sweep] = accepted_here / mobile_count

    final_stack = stack.with_positions(best_positions)
    final_energy = mobile_energy(final_stack, frozen)
    if final_energy > initial_energy:
        final_stack, final_energy = stack, initial_energy
    return MinimizationResult(
        final_stack=final_stack,
        frozen=frozen,
        energy_trace=energy_trace,
        acceptance_trace=acceptance_trace,
        initial_energy=initial_energy,
        final_energy=final_energy,
        accepted_moves=accepted,
        bookkeeping_error=worst_drift,
        schedule=schedule,
        seed=seed,
    )


def anneal(
    stack: Stack,
    schedule: AnnealSchedule | None = None,
    frozen: Sequence[int] = (),
    seed: int = 0,
) -> MinimizationResult:
    """Metropolis annealing with geometric cooling; deterministic for a given seed."""
    schedule = schedule or AnnealSchedule()
    temperature = schedule.initial_temperature
    if temperature is None:
        mobile_count = max(1, len(stack) - len(set(frozen)))
        temperature = 10.0 * abs(mobile_energy(stack, frozen)) / mobile_count
        schedule = AnnealSchedule(
            initial_temperature=temperature,
            cooling_factor=schedule.cooling_factor,
            sweeps=schedule.sweeps,
            move_scale=schedule.move_scale,
        )
    temperatures = temperature * schedule.cooling_factor ** np.arange(schedule.sweeps)
    return _metropolis(
        stack, frozen, temperatures, schedule.move_scale, seed, schedule, greedy=False
    )


def greedy_descent(
    stack: Stack,
    move_scale: float = 0.05,
    sweeps: int = 1000,
    frozen: Sequence[int] = (),
    seed: int = 0,
) -> MinimizationResult:
    """Zero-temperature limit: only energy-lowering moves are accepted."""
    schedule = AnnealSchedule(
        initial_temperature=0.0, cooling_factor=1.0, sweeps=sweeps, move_scale=move_scale
    )
    return _metropolis(
        stack, frozen, np.zeros(sweeps), move_scale, seed, schedule, greedy=True
    )


def _run_chain(args: tuple[Stack, AnnealSchedule, tuple[int, ...], int]) -> MinimizationResult:
    stack, schedule, frozen, seed = args
    return anneal(stack, schedule, frozen, seed)


def run_chains(
    stack: Stack,
    schedule: AnnealSchedule | None = None,
    frozen: Sequence[int] = (),
    chains: int = 4,
    seed: int = 0,
    max_workers: int = 1,
) -> tuple[MinimizationResult, list[MinimizationResult]]:
    """Independent chains with seeds ``seed + c``; returns (best, all).

    The best chain is the one with the lowest final energy, ties going to
    the lowest index, so the choice does not depend on scheduling.
    """
    schedule = schedule or AnnealSchedule()
    jobs = [(stack, schedule, tuple(frozen), seed + c) for c in range(chains)]
    if max_workers <= 1 or chains <= 1:
        results = [_run_chain(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(max_workers, chains)) as pool:
            results = list(pool.map(_run_chain, jobs))
    best = min(range(len(results)), key=lambda c: (results[c].final_energy, c))
    return results[best], results


@dataclass(frozen=True, eq=False)
class SlabReport:
    """Slabs of a configuration, split at gaps larger than ``gap_threshold``."""

    slabs: tuple[tuple[int, ...], ...]
    mean_spacings: tuple[float, ...]
    decay_fits: tuple[tuple[float, float] | None, ...]
    gap_peak_intensities: tuple[float, ...]
    gap_threshold: float

    @property
    def slab_count(self) -> int:
        return len(self.slabs)

    @property
    def has_slab_structure(self) -> bool:
        return self.slab_count >= 2

    def to_dict(self) -> dict[str, Any]:
        return {
            "slab_count": self.slab_count,
            "slabs": [[int(i) for i in slab] for slab in self.slabs],
            "mean_spacings": list(self.mean_spacings),
            "decay_fits": [
                None if fit is None else {"slope": fit[0], "r_squared": fit[1]}
                for fit in self.decay_fits
            ],
            "gap_peak_intensities": list(self.gap_peak_intensities),
        }


def _log_linear_fit(z: np.ndarray, intensity: np.ndarray) -> tuple[float, float]:
    """Slope and R² of log|E|² against z."""
    y = np.log(intensity)
    slope, intercept = np.polyfit(z, y, 1)
    residual = y - (slope * z + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r_squared = 1.0 - float(np.sum(residual**2) / total) if total > 0 else 1.0
    return float(slope), r_squared


def slab_analysis(
    stack: Stack, gap_threshold: float = 1.0, strict: bool = False
) -> SlabReport:
    """Cluster scatterers into slabs and characterise each.

    Records, per slab, the mean spacing and a log-linear fit of the
    intensity at its scatterers (None for slabs under three scatterers),
    plus the peak intensity in every gap between neighbouring slabs.

    Raises:
        NoSlabStructure: Only when ``strict`` and fewer than two slabs exist.
    """
    solution = solve(stack)
    positions = stack.positions
    boundaries = np.flatnonzero(np.diff(positions) > gap_threshold) + 1
    slabs = tuple(tuple(int(i) for i in part) for part in np.split(np.arange(len(stack)), boundaries))
    if strict and len(slabs) < 2:
        raise NoSlabStructure(
            f"Configuration forms {len(slabs)} slab(s); at least two are required",
            details={"gap_threshold": gap_threshold},
        )

    amplitudes = solution.amplitudes
    intensities = np.abs(amplitudes[1:, 0] + amplitudes[1:, 1]) ** 2
    spacings, fits = [], []
    for slab in slabs:
        idx = list(slab)
        spacings.append(float(np.mean(np.diff(positions[idx]))) if len(idx) > 1 else math.nan)
        fits.append(_log_linear_fit(positions[idx], intensities[idx]) if len(idx) >= 3 else None)

    gap_peaks = []
    for left, right in zip(slabs[:-1], slabs[1:], strict=True):
        gap_peaks.append(peak_intensity(solution, positions[left[-1]], positions[right[0]])[1])

    return SlabReport(
        slabs=slabs,
        mean_spacings=tuple(spacings),
        decay_fits=tuple(fits),
        gap_peak_intensities=tuple(gap_peaks),
        gap_threshold=gap_threshold,
    )


__all__ = [
    "FINAL_HEADER",
    "TRACE_HEADER",
    "AnnealSchedule",
    "MinimizationResult",
    "SlabReport",
    "anneal",
    "greedy_descent",
    "run_chains",
    "slab_analysis",
]
