"""Canned scenarios: self-ordering of a long cloud chain, an atom in a
high-finesse cavity, and a beam splitter inside a cavity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import brentq

from src.core.types import WAVELENGTH, Pump, Stack, lattice_constant
from src.dynamics.equilibria import Equilibrium, find_equilibrium
from src.dynamics.montecarlo import (
    AnnealSchedule,
    MinimizationResult,
    SlabReport,
    run_chains,
    slab_analysis,
)
from src.optics.field_solver import (
    IntensityProfile,
    free_space_mean,
    free_space_peak,
    intensity_profile,
    peak_intensity,
    region_peaks,
    region_references,
    solve,
    solve_batch,
)
from src.optics.forces import energies_from_amplitudes, energy_gradient, force_vector
from src.sweeps.force_map import BeamSplitterSpec, CavitySpec, SweepGrid, force_map

CAVITY_FROZEN = (0, 2)


@dataclass(frozen=True)
class ChainSetup:
    """Regular lattice of identical clouds under balanced pumping."""

    n_clouds: int = 100
    lambda_param: float = 0.1
    spacing: float | None = None

    def stack(self) -> Stack:
        spacing = self.spacing if self.spacing is not None else lattice_constant(self.lambda_param)
        return Stack.from_arrays(
            spacing * np.arange(self.n_clouds), self.lambda_param, Pump.symmetric()
        )


@dataclass(frozen=True, eq=False)
class ChainOrderingResult:
    initial_stack: Stack
    best: MinimizationResult
    chains: list[MinimizationResult]
    slabs: SlabReport
    forces: np.ndarray
    peak: tuple[float, float]

    @property
    def energy_ratio(self) -> float:
        return self.best.final_energy / self.best.initial_energy

    def summary(self) -> dict[str, Any]:
        return {
            "initial_energy": self.best.initial_energy,
            "final_energy": self.best.final_energy,
            "energy_ratio": self.energy_ratio,
            "peak_position": self.peak[0],
            "peak_intensity": self.peak[1],
            "outer_forces": [float(self.forces[0]), float(self.forces[-1])],
            "chains": [chain.summary() for chain in self.chains],
            "best_seed": self.best.seed,
            "slabs": self.slabs.to_dict(),
        }


def scenario_fig1(
    seed: int = 0,
    setup: ChainSetup | None = None,
    schedule: AnnealSchedule | None = None,
    chains: int = 4,
    max_workers: int = 1,
) -> ChainOrderingResult:
    """Anneal a regular chain of clouds and analyse the slabs it breaks into."""
    setup = setup or ChainSetup()
    stack = setup.stack()
    best, results = run_chains(
        stack, schedule or AnnealSchedule(), chains=chains, seed=seed, max_workers=max_workers
    )
    final = best.final_stack
    solution = solve(final)
    positions = final.positions
    return ChainOrderingResult(
        initial_stack=stack,
        best=best,
        chains=results,
        slabs=slab_analysis(final),
        forces=force_vector(solution),
        peak=peak_intensity(solution, float(positions[0]), float(positions[-1])),
    )


@dataclass(frozen=True)
class CavitySetup:
    """Two frozen mirrors at 0 and ``length`` around one mobile atom."""

    mirror_lambda: float = 10.0
    length: float = 1.501
    atom_lambda: float = 0.1
    pump: Pump = field(default_factory=Pump.symmetric)

    def stack(self, atom_position: float) -> Stack:
        return Stack.from_arrays(
            [0.0, atom_position, self.length],
            [self.mirror_lambda, self.atom_lambda, self.mirror_lambda],
            self.pump,
        )

    @property
    def free_space_peak(self) -> float:
        return free_space_peak(self.pump.left, self.pump.right)

    @property
    def free_space_mean(self) -> float:
        """Intensity outside the cavity with nothing in it, averaged over a wavelength."""
        return free_space_mean(self.pump.left, self.pump.right)


@dataclass(frozen=True, eq=False)
class CavityPoint:
    """Atom position with its field, force and energy diagnostics."""

    stack: Stack
    energy: float
    energy_gradient: float
    force: float
    peak_position: float
    peak_intensity: float
    peak_relative: float
    peak_over_mean: float
    profile: IntensityProfile

    @property
    def atom_position(self) -> float:
        return float(self.stack.positions[1])

    def to_dict(self) -> dict[str, Any]:
        return {
            "atom_position": self.atom_position,
            "energy": self.energy,
            "energy_gradient": self.energy_gradient,
            "force": self.force,
            "peak_position": self.peak_position,
            "peak_intensity": self.peak_intensity,
            "peak_relative_to_free_space": self.peak_relative,
            "peak_over_free_space_mean": self.peak_over_mean,
        }


@dataclass(frozen=True, eq=False)
class CavityAtomResult:
    setup: CavitySetup
    scan_positions: np.ndarray
    scan_energies: np.ndarray
    scan_peaks: np.ndarray
    energy_minimum: CavityPoint
    equilibrium: Equilibrium
    equilibrium_point: CavityPoint

    def summary(self) -> dict[str, Any]:
        equilibrium = self.equilibrium_point.to_dict()
        equilibrium["residual"] = self.equilibrium.residual
        if self.equilibrium.stability is not None:
            equilibrium["stability"] = self.equilibrium.stability.value
        return {
            "free_space_peak": self.setup.free_space_peak,
            "free_space_mean": self.setup.free_space_mean,
            "energy_minimum": self.energy_minimum.to_dict(),
            "equilibrium": equilibrium,
        }


def _cavity_scan(setup: CavitySetup, atoms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Atom energy and peak intracavity intensity for each atom position."""
    configs = np.column_stack([np.zeros_like(atoms), atoms, np.full_like(atoms, setup.length)])
    lambdas = np.array([setup.mirror_lambda, setup.atom_lambda, setup.mirror_lambda])
    amplitudes = solve_batch(configs, lambdas, complex(setup.pump.left), complex(setup.pump.right))
    energies = energies_from_amplitudes(amplitudes, lambdas)[:, 1]

    refs = region_references(configs)
    inside = amplitudes[:, 1:3]
    starts = configs[:, 0:2]
    ends = configs[:, 1:3]
    _, peaks = region_peaks(inside, refs[:, 1:3], starts, ends)
    return energies, peaks.max(axis=1)


def _cavity_point(setup: CavitySetup, stack: Stack, grid_points: int) -> CavityPoint:
    solution = solve(stack)
    peak_z, peak = peak_intensity(solution, 0.0, setup.length)
    energies = energies_from_amplitudes(solution.amplitudes[None], stack.lambdas)[0]
    n_points = max(2, int(np.ceil(grid_points * setup.length / WAVELENGTH)) + 1)
    return CavityPoint(
        stack=stack,
        energy=float(energies[1]),
        energy_gradient=energy_gradient(stack, 1, frozen=CAVITY_FROZEN),
        force=float(force_vector(solution)[1]),
        peak_position=peak_z,
        peak_intensity=peak,
        peak_relative=peak / setup.free_space_peak,
        peak_over_mean=peak / setup.free_space_mean,
        profile=intensity_profile(solution, 0.0, setup.length, n_points),
    )


def _refine_energy_minimum(setup: CavitySetup, left: float, right: float, fallback: float) -> float:
    def slope(z: float) -> float:
        return energy_gradient(setup.stack(z), 1, frozen=CAVITY_FROZEN)

    low, high = slope(left), slope(right)
    if low < 0.0 < high:
        return float(brentq(slope, left, right, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return fallback


def scenario_fig2(
    setup: CavitySetup | None = None,
    scan_points: int = 8192,
    grid_points_per_wavelength: int = 256,
    margin: float = 0.01,
) -> CavityAtomResult:
    """Atom in a high-finesse cavity: energy minimum versus force equilibrium.

    The energy minimum is located on a dense scan and refined to a root of
    dU/dz; the equilibrium is the force-free point reached from the cavity
    centre. Peak intensities are reported per beam, relative to the
    free-space standing-wave peak, and relative to the mean free-space
    intensity outside the cavity.
    """
    setup = setup or CavitySetup()
    atoms = np.linspace(margin, setup.length - margin, scan_points)
    energies, peaks = _cavity_scan(setup, atoms)

    k = int(np.argmin(energies))
    left = atoms[max(k - 1, 0)]
    right = atoms[min(k + 1, len(atoms) - 1)]
    z_min = _refine_energy_minimum(setup, float(left), float(right), float(atoms[k]))
    energy_minimum = _cavity_point(setup, setup.stack(z_min), grid_points_per_wavelength)

    equilibrium = find_equilibrium(setup.stack(setup.length / 2.0), frozen=CAVITY_FROZEN)
    equilibrium_point = _cavity_point(setup, equilibrium.stack, grid_points_per_wavelength)

    return CavityAtomResult(
        setup=setup,
        scan_positions=atoms,
        scan_energies=energies,
        scan_peaks=peaks,
        energy_minimum=energy_minimum,
        equilibrium=equilibrium,
        equilibrium_point=equilibrium_point,
    )


@dataclass(frozen=True)
class SplitterSetup:
    """Defaults of the beam-splitter-in-cavity map."""

    mirror_lambda: float | None = 10.0
    bs_lambda: float = 1.0
    length_range: tuple[float, float] = (2.5, 3.5)
    position_range: tuple[float, float] = (0.05, 2.45)
    resolution: tuple[int, int] = (512, 256)

    def specs(self) -> tuple[CavitySpec, BeamSplitterSpec]:
        n_positions, n_lengths = self.resolution
        return (
            CavitySpec(self.mirror_lambda, *self.length_range, n_lengths),
            BeamSplitterSpec(self.bs_lambda, *self.position_range, n_positions),
        )


def scenario_fig3(setup: SplitterSetup | None = None, max_workers: int = 1) -> SweepGrid:
    """Normalised force map of a beam splitter inside a cavity."""
    cavity, splitter = (setup or SplitterSetup()).specs()
    return force_map(cavity, splitter, max_workers=max_workers)


__all__ = [
    "CAVITY_FROZEN",
    "CavityAtomResult",
    "CavityPoint",
    "CavitySetup",
    "ChainOrderingResult",
    "ChainSetup",
    "SplitterSetup",
    "scenario_fig1",
    "scenario_fig2",
    "scenario_fig3",
]
