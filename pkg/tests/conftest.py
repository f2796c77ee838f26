import numpy as np
import pytest

from realps import (
    GaussianMixtureSpec,
    QuadratureGrid,
    TemperatureLadder,
    TemperingScheme,
    WarmStartSet,
    make_gaussian_mixture,
)


@pytest.fixture(scope="session")
def bottleneck_target():
    """1D mixture 0.5 N(-5, 0.5^2) + 0.5 N(5, 2^2): narrow vs wide mode."""
    spec = GaussianMixtureSpec(
        means=[[-5.0], [5.0]],
        covariances=[[[0.25]], [[4.0]]],
        weights=[0.5, 0.5],
    )
    return make_gaussian_mixture(spec)


@pytest.fixture(scope="session")
def bottleneck_spec():
    return GaussianMixtureSpec(
        means=[[-5.0], [5.0]],
        covariances=[[[0.25]], [[4.0]]],
        weights=[0.5, 0.5],
    )


@pytest.fixture(scope="session")
def bottleneck_warm_starts():
    return WarmStartSet(np.array([[-5.0], [5.0]]))


@pytest.fixture(scope="session")
def six_level_ladder():
    return TemperatureLadder(np.array([16.0, 8.0, 4.0, 2.0, 1.0, 0.0]))


@pytest.fixture(scope="session")
def wide_grid_1d():
    # Modes at +/-5; box padded so ~1e-12 of mass sits outside; spacing 0.01
    # aligns with the +/-10 teleport shift.
    return QuadratureGrid((-15.0,), (15.0,), (3001,))


@pytest.fixture(scope="session")
def uniform_scheme(six_level_ladder, bottleneck_warm_starts):
    L, M = six_level_ladder.n_levels, bottleneck_warm_starts.n_modes
    return TemperingScheme(
        six_level_ladder,
        bottleneck_warm_starts,
        np.ones((L, M)),
        np.full(L, 1.0 / L),
    )
