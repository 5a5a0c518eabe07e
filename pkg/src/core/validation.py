"""Structural checks applied to every stack before it is solved."""

from __future__ import annotations

import cmath
import math

from src.core.exceptions import (
    ComplexPolarizability,
    EmptyStack,
    NonFiniteValue,
    NoPump,
    OverlappingScatterers,
    UnorderedScatterers,
    ZeroPolarizability,
)
from src.core.types import MIN_GAP, Stack


def validate_stack(stack: Stack) -> Stack:
    """Check that a stack can be solved.

    Args:
        stack: Stack to check.

    Returns:
        The same stack, so the call can be chained.

    Raises:
        EmptyStack: No scatterers.
        NonFiniteValue: A position, Λ or pump amplitude is NaN/inf.
        ComplexPolarizability: Λ has a non-zero imaginary part.
        ZeroPolarizability: Λ = 0.
        UnorderedScatterers: A position lies left of its predecessor.
        OverlappingScatterers: A gap is below ``MIN_GAP``; ``index`` names
            the right-hand scatterer.
        NoPump: Both incident amplitudes are zero.
    """
    if not stack.scatterers:
        raise EmptyStack()

    for i, scatterer in enumerate(stack.scatterers):
        if not math.isfinite(scatterer.position):
            raise NonFiniteValue(f"scatterers.{i}.position", scatterer.position)
        lam = complex(scatterer.polarizability)
        if not cmath.isfinite(lam):
            raise NonFiniteValue(f"scatterers.{i}.lambda", scatterer.polarizability)
        if lam.imag != 0.0:
            raise ComplexPolarizability(i, scatterer.polarizability)
        if lam.real == 0.0:
            raise ZeroPolarizability(i)

    for i in range(1, len(stack.scatterers)):
        gap = stack.scatterers[i].position - stack.scatterers[i - 1].position
        if gap < 0.0:
            raise UnorderedScatterers(
                i, stack.scatterers[i].position, stack.scatterers[i - 1].position
            )
        if gap < MIN_GAP:
            raise OverlappingScatterers(i, gap, MIN_GAP)

    for side in ("left", "right"):
        amplitude = complex(getattr(stack.pump, side))
        if not cmath.isfinite(amplitude):
            raise NonFiniteValue(f"pump.{side}", amplitude)
    if stack.pump.left == 0 and stack.pump.right == 0:
        raise NoPump()

    return stack
