import numpy as np
import pytest

import platelike as pl


@pytest.fixture(scope="session")
def axis_direction():
    return pl.Direction.from_vector((0, 1))


@pytest.fixture(scope="session")
def tilted_direction():
    return pl.Direction.from_vector((2, 1))


@pytest.fixture(scope="session")
def small_setup(axis_direction):
    """Tiny axis-aligned problem, cheap enough for brute-force oracles."""
    strip = pl.Strip(0.0, 6.0, axis_direction)
    grid = pl.build_grid(strip, 0.5, 2.0)
    kernel = pl.KernelSpec.homogeneous(0.75)
    potential = pl.PotentialSpec.quartic(2.0)
    model = pl.EnergyModel(kernel, potential, r_cut=2.5)
    return strip, grid, kernel, potential, model


@pytest.fixture(scope="session")
def hetero_setup(tilted_direction):
    """Tilted direction with a genuinely heterogeneous medium."""
    strip = pl.Strip(0.0, 5.0, tilted_direction)
    grid = pl.build_grid(strip, 0.5, 2.0)
    coeff = pl.CoeffField("sin_product", {"offset": 0.5, "amplitude": 0.5})
    kernel = pl.KernelSpec.heterogeneous(0.4, 0.5, 1.5, coeff)
    q = pl.CoeffField("sin_product", {"offset": 1.0, "amplitude": 0.5})
    potential = pl.PotentialSpec.quartic(2.0, coeff=q)
    model = pl.EnergyModel(kernel, potential, r_cut=2.5)
    return strip, grid, kernel, potential, model


@pytest.fixture(scope="session")
def small_minimizer(small_setup):
    """A converged minimal minimizer on the tiny axis problem."""
    strip, grid, kernel, potential, model = small_setup
    res = pl.minimal_minimizer(model, strip, pl.default_seeds(grid, strip),
                               pl.MinimizeOptions(tol=1e-8))
    assert res.status == "converged"
    return model, strip, res


def random_admissible(grid, strip, rng):
    vals = rng.uniform(-1.0, 1.0, grid.n_sites)
    return pl.project_admissible(pl.PeriodicField(grid, vals), strip)
