"""Shared fixtures for lightstack tests."""

from pathlib import Path

import numpy as np
import pytest
import yaml

from src.core.types import Pump, Stack, lattice_constant
from src.optics.field_solver import clear_cache


@pytest.fixture(autouse=True)
def fresh_solve_cache():
    """Start every test with an empty solution cache."""
    clear_cache()
    yield
    clear_cache()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_stack(rng: np.random.Generator, max_count: int = 10, lambda_max: float = 2.0) -> Stack:
    """Random ordered stack with non-zero Λ in [−lambda_max, lambda_max] and a random pump."""
    count = int(rng.integers(1, max_count + 1))
    gaps = rng.uniform(0.05, 1.5, size=count - 1)
    positions = np.concatenate([[rng.uniform(-1.0, 1.0)], gaps]).cumsum()
    magnitudes = rng.uniform(0.05, lambda_max, size=count)
    signs = rng.choice([-1.0, 1.0], size=count)
    pump = Pump(
        left=complex(rng.normal(), rng.normal()),
        right=complex(rng.normal(), rng.normal()),
    )
    return Stack.from_arrays(positions, magnitudes * signs, pump)


@pytest.fixture
def stack_corpus(rng):
    """A reproducible list of random stacks (N ≤ 10)."""
    return [random_stack(rng) for _ in range(1000)]


@pytest.fixture
def cloud_pair():
    """Two Λ = 0.1 clouds under a balanced pump, slightly off their equilibrium spacing."""
    return Stack.from_arrays([0.0, 0.9], 0.1, Pump.symmetric())


@pytest.fixture
def regular_chain():
    """Five Λ = 0.1 clouds spaced by the force-free lattice constant."""
    d0 = lattice_constant(0.1)
    return Stack.from_arrays(d0 * np.arange(5), 0.1, Pump.symmetric())


@pytest.fixture
def write_config(tmp_path: Path):
    """Write a mapping to a YAML file and return its path."""

    def _write(data, name: str = "stack.yaml") -> Path:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data) if not isinstance(data, str) else data)
        return path

    return _write
