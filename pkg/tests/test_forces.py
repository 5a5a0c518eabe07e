"""Tests for optical forces, energies and their derivatives."""

import math

import numpy as np
import pytest

from src.core.exceptions import IndexOutOfRange, StepCausesCrossing
from src.core.types import WAVENUMBER, Pump, Stack, single_scatterer_force
from src.optics.field_solver import solve
from src.optics.forces import (
    FORCE_REPORT_HEADER,
    dipole_energy,
    energy_gradient,
    energy_report,
    force_eq5,
    force_eq6,
    force_jacobian,
    force_report,
    force_vector,
    gradient_force_vector,
    mobile_energy,
    mobile_mask,
    momentum_residual,
)


class TestSingleScatterer:
    """Tests against closed forms for one scatterer."""

    @pytest.mark.parametrize("lam", [0.1, 1.0, -0.5, 3.0])
    def test_radiation_pressure(self, lam):
        """Should push a lone scatterer with F₀ = Λ²/(1+Λ²) under a left pump."""
        solution = solve(Stack.from_arrays([0.0], lam, Pump.left_only()))
        assert force_eq6(solution, 0) == pytest.approx(single_scatterer_force(lam), abs=1e-14)
        assert force_eq5(solution, 0) == pytest.approx(single_scatterer_force(lam), abs=1e-14)

    def test_balanced_pump_cancels(self):
        """Should give zero force for equal pumps from both sides."""
        solution = solve(Stack.from_arrays([0.0], 0.8, Pump.symmetric()))
        assert force_eq6(solution, 0) == pytest.approx(0.0, abs=1e-14)

    def test_self_consistent_energy(self):
        """Should give U = −(Λ/2k)·4/(1+Λ²) in a balanced standing wave."""
        lam = 0.1
        solution = solve(Stack.from_arrays([0.0], lam, Pump.symmetric()))
        expected = -(lam / (2 * WAVENUMBER)) * 4 / (1 + lam**2)
        assert dipole_energy(solution, 0) == pytest.approx(expected, rel=1e-12)

    def test_energy_vanishes_at_node(self):
        """Should give zero energy when the pump phases put a node on the cloud."""
        solution = solve(Stack.from_arrays([0.0], 0.1, Pump(1.0, -1.0)))
        assert dipole_energy(solution, 0) == pytest.approx(0.0, abs=1e-15)


class TestForceFormulas:
    """Tests comparing the two force expressions."""

    def test_formulas_agree(self, stack_corpus):
        """Should match momentum-balance and field-gradient forces to 1e-8 relative."""
        worst = 0.0
        for stack in stack_corpus:
            solution = solve(stack)
            f6 = force_vector(solution)
            f5 = gradient_force_vector(solution)
            worst = max(worst, float(np.max(np.abs(f5 - f6)) / (1.0 + np.max(np.abs(f6)))))
        assert worst < 1e-8

    def test_momentum_balance(self, stack_corpus):
        """Should sum the forces to the net incoming momentum flux."""
        for stack in stack_corpus[:300]:
            solution = solve(stack)
            scale = 1.0 + float(np.max(np.abs(solution.amplitudes))) ** 2
            assert abs(momentum_residual(solution)) <= 1e-10 * scale

    def test_total_force_is_reflected_power(self):
        """Should push the stack by ½(1 + R − T) = R under a unit left pump."""
        stack = Stack.from_arrays([0.0, 0.3, 0.8], [0.4, -0.2, 0.9], Pump.left_only())
        solution = solve(stack)
        reflection = abs(solution.amplitudes[0, 1]) ** 2
        assert float(np.sum(force_vector(solution))) == pytest.approx(reflection, abs=1e-12)

    def test_mirror_symmetric_stack(self):
        """Should give antisymmetric forces for a mirror-symmetric stack and pump."""
        stack = Stack.from_arrays([0.0, 0.3, 1.0, 1.7, 2.0], [0.2, 0.5, 0.1, 0.5, 0.2], Pump.symmetric())
        forces = force_vector(solve(stack))
        np.testing.assert_allclose(forces, -forces[::-1], atol=1e-12)

    def test_global_phase_invariance(self):
        """Should not change forces when both pumps share a phase factor."""
        stack = Stack.from_arrays([0.0, 0.45, 1.2], [0.3, 0.3, -0.7], Pump(1.0, 0.6))
        rotated = stack.with_pump(stack.pump.scaled(np.exp(1.3j)))
        np.testing.assert_allclose(
            force_vector(solve(rotated)), force_vector(solve(stack)), atol=1e-13
        )

    def test_force_report(self):
        """Should bundle both formulas, energies and the residual for a stack."""
        stack = Stack.from_arrays([0.0, 0.35, 0.9], [0.3, -0.6, 1.2], Pump(1.0, 0.2j))
        report = force_report(stack)

        assert report.max_discrepancy < 1e-12
        assert abs(report.momentum_residual) < 1e-12
        assert report.total_force == pytest.approx(float(np.sum(report.force_eq5)), abs=1e-12)
        rows = report.rows()
        assert len(rows) == 3
        assert len(rows[0]) == len(FORCE_REPORT_HEADER)
        assert rows[1][0] == 1 and rows[1][1] == 0.35 and rows[1][2] == -0.6
        assert rows[2][5] == pytest.approx(report.energies.per_scatterer[2])

    def test_index_out_of_range(self):
        """Should raise IndexOutOfRange for a missing scatterer."""
        solution = solve(Stack.from_arrays([0.0, 1.0], 0.1))
        with pytest.raises(IndexOutOfRange):
            force_eq6(solution, 5)
        with pytest.raises(IndexOutOfRange):
            dipole_energy(solution, -1)


class TestEnergies:
    """Tests for dipole energies."""

    def test_energy_report_totals(self):
        """Should sum the per-scatterer energies."""
        solution = solve(Stack.from_arrays([0.0, 0.4, 0.9], 0.2, Pump.symmetric()))
        report = energy_report(solution)
        assert report.total == pytest.approx(float(np.sum(report.per_scatterer)))
        assert report.subtotal([0, 2]) == pytest.approx(
            report.per_scatterer[0] + report.per_scatterer[2]
        )

    def test_mobile_mask(self):
        """Should mark frozen indices as immobile."""
        np.testing.assert_array_equal(mobile_mask(4, (0, 3)), [False, True, True, False])

    def test_mobile_energy_excludes_frozen(self):
        """Should leave frozen scatterers out of the objective."""
        stack = Stack.from_arrays([0.0, 0.4, 0.9], 0.2, Pump.symmetric())
        report = energy_report(solve(stack))
        assert mobile_energy(stack, frozen=(0,)) == pytest.approx(report.subtotal([1, 2]))

    def test_energy_gradient_of_lone_cloud_vanishes(self):
        """Should be flat for a single cloud under a co-moving pump."""
        stack = Stack.from_arrays([0.2], 0.1, Pump.symmetric())
        assert energy_gradient(stack, 0) == pytest.approx(0.0, abs=1e-9)

    def test_energy_gradient_step_too_large(self):
        """Should refuse a step that reaches a neighbour."""
        stack = Stack.from_arrays([0.0, 1e-3], 0.1, Pump.symmetric())
        with pytest.raises(StepCausesCrossing):
            energy_gradient(stack, 0, step=1e-2)


class TestForceJacobian:
    """Tests for the finite-difference Jacobian."""

    def test_symmetric_for_equal_clouds_balanced_pump(self):
        """Should give J₁₂ = J₂₁ for two equal clouds under equal pumps."""
        stack = Stack.from_arrays([0.0, 0.37], 0.5, Pump.symmetric())
        jac = force_jacobian(stack)
        assert jac[0, 1] == pytest.approx(jac[1, 0], rel=1e-6)

    def test_asymmetric_for_unbalanced_pump(self):
        """Should lose symmetry when the pumps differ."""
        worst = 0.0
        for gap in (0.2, 0.3, 0.37):
            jac = force_jacobian(Stack.from_arrays([0.0, gap], 0.5, Pump(1.0, 0.5)))
            worst = max(worst, abs(jac[0, 1] - jac[1, 0]) / np.max(np.abs(jac)))
        assert worst > 0.01

    def test_rows_sum_to_zero(self):
        """Should annihilate rigid translations."""
        stack = Stack.from_arrays([0.0, 0.3, 0.75, 1.4], [0.2, -0.4, 0.6, 0.3], Pump(1.0, 0.5j))
        jac = force_jacobian(stack)
        np.testing.assert_allclose(jac.sum(axis=1), 0.0, atol=1e-6 * np.max(np.abs(jac)))

    def test_step_halving_converges(self):
        """Should change by less than 1e-4 relative when the step is halved."""
        stack = Stack.from_arrays([0.0, 0.3, 0.75], [0.2, 0.4, 0.3], Pump.symmetric())
        coarse = force_jacobian(stack, step=1e-5)
        fine = force_jacobian(stack, step=5e-6)
        assert np.max(np.abs(coarse - fine)) <= 1e-4 * np.max(np.abs(fine))

    def test_subset_of_indices(self):
        """Should return only the requested rows and columns."""
        stack = Stack.from_arrays([0.0, 0.3, 0.75], [0.2, 0.4, 0.3], Pump.symmetric())
        full = force_jacobian(stack)
        sub = force_jacobian(stack, indices=[1, 2])
        np.testing.assert_allclose(sub, full[1:, 1:], atol=1e-12)

    def test_matches_force_derivative(self):
        """Should agree with a hand-rolled central difference of one force."""
        stack = Stack.from_arrays([0.0, 0.3], [0.2, 0.4], Pump.symmetric())
        h = 1e-6
        plus = force_vector(solve(stack.with_positions([0.0, 0.3 + h])))
        minus = force_vector(solve(stack.with_positions([0.0, 0.3 - h])))
        expected = (plus[0] - minus[0]) / (2 * h)
        assert force_jacobian(stack, step=h)[0, 1] == pytest.approx(expected, rel=1e-9)

    def test_step_causes_crossing(self):
        """Should refuse a step as large as the gap."""
        stack = Stack.from_arrays([0.0, 1e-4], 0.1, Pump.symmetric())
        with pytest.raises(StepCausesCrossing):
            force_jacobian(stack, step=1e-3)

    def test_translation_derivative_of_energy(self):
        """Should give zero total derivative of the energy under rigid shifts."""
        stack = Stack.from_arrays([0.0, 0.3, 0.8], [0.2, 0.4, 0.3], Pump(1.0, 0.5))
        total = sum(energy_gradient(stack, j) for j in range(3))
        assert total == pytest.approx(0.0, abs=1e-7)
        assert math.isfinite(total)
