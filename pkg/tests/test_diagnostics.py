import math

import numpy as np
import pytest

from realps.diagnostics import (
    ChiSquareDivergenceWarning,
    adjacency_chi_square,
    balance_report,
    build_mixing_report,
    chi_square_divergence,
    integrated_autocorr_time,
    mode_occupancy,
    occupancy_error,
    projected_spectral_gap,
    reversible_spectral_gap,
    tv_estimate,
)
from realps.errors import ConfigurationError
from realps.kernels import SampleBatch
from realps.targets import GaussianMixtureSpec, QuadratureGrid, make_gaussian_mixture
from realps.tilting import TemperatureLadder, TemperingScheme, WarmStartSet


def batch_from_xs(xs, level=1):
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    return SampleBatch(
        times=np.arange(n, dtype=float),
        levels=np.full(n, level, dtype=np.int32),
        xs=xs.reshape(n, -1),
        events=np.zeros(n, dtype=np.int8),
        seed=0,
        scheme_tag="test",
    )


@pytest.fixture(scope="module")
def symmetric_target():
    return make_gaussian_mixture(
        GaussianMixtureSpec([[-4.0], [4.0]], [[[1.0]], [[1.0]]], [0.5, 0.5])
    )


@pytest.fixture(scope="module")
def symmetric_scheme(symmetric_target):
    ws = WarmStartSet(symmetric_target.modes)
    ladder = TemperatureLadder(np.array([2.0, 0.0]))
    return TemperingScheme(ladder, ws, np.ones((2, 2)), np.array([0.5, 0.5]))


@pytest.fixture(scope="module")
def grid_sym():
    # Spacing aligns with the +/-8 teleport shift.
    return QuadratureGrid((-14.0,), (14.0,), (2801,))


class TestModeOccupancy:
    def test_all_in_one_mode(self, bottleneck_warm_starts):
        b = batch_from_xs(np.full((50, 1), -5.0))
        np.testing.assert_allclose(
            mode_occupancy(b, bottleneck_warm_starts, 1), [1.0, 0.0]
        )

    def test_reflected_batch_is_exactly_half(self, bottleneck_warm_starts):
        xs = np.concatenate([np.linspace(-6, -4, 20), np.linspace(4, 6, 20)])
        b = batch_from_xs(xs[:, None])
        np.testing.assert_allclose(
            mode_occupancy(b, bottleneck_warm_starts, 1), [0.5, 0.5]
        )

    def test_empty_level_raises(self, bottleneck_warm_starts):
        b = batch_from_xs(np.full((5, 1), -5.0), level=1)
        with pytest.raises(ConfigurationError):
            mode_occupancy(b, bottleneck_warm_starts, 2)

    def test_occupancy_error_half_l1(self):
        assert occupancy_error([0.8, 0.2], [0.5, 0.5]) == pytest.approx(0.3)


class TestBalanceReport:
    def test_single_cell_ratios_are_one(self, grid_sym):
        t = make_gaussian_mixture(GaussianMixtureSpec([[0.0]], [[[1.0]]], [1.0]))
        ws = WarmStartSet(np.array([[0.0]]))
        scheme = TemperingScheme(TemperatureLadder(np.array([0.0])), ws,
                                 np.ones((1, 1)), np.array([1.0]))
        rep = balance_report(scheme, t, QuadratureGrid((-10.0,), (10.0,), (2001,)))
        assert rep.h1_ratio == pytest.approx(1.0, abs=1e-12)
        assert rep.h2_ratio == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_equal_weights_h1_is_one(self, symmetric_scheme,
                                               symmetric_target, grid_sym):
        rep = balance_report(symmetric_scheme, symmetric_target, grid_sym)
        np.testing.assert_allclose(rep.h1_ratio_per_level, 1.0, atol=1e-6)

    def test_unbalanced_weights_show_up(self, bottleneck_target,
                                        bottleneck_warm_starts, wide_grid_1d,
                                        uniform_scheme):
        rep = balance_report(uniform_scheme, bottleneck_target, wide_grid_1d)
        assert rep.h1_ratio > 1.5
        assert rep.h2_ratio > 2.0


class TestChiSquare:
    def test_identical_densities_zero(self, grid_sym):
        nodes = grid_sym.nodes()[:, 0]
        logp = -0.5 * nodes**2
        assert chi_square_divergence(logp, logp.copy(), grid_sym) == pytest.approx(
            0.0, abs=1e-8
        )

    def test_gaussian_closed_form(self):
        # chi^2(N(0,1) || N(0,s2)) + 1 = s2 / sqrt(2 s2 - 1) for s2 > 1/2.
        grid = QuadratureGrid((-12.0,), (12.0,), (4001,))
        nodes = grid.nodes()[:, 0]
        s2 = 1.2
        logp = -0.5 * nodes**2
        logq = -0.5 * nodes**2 / s2
        expected = s2 / math.sqrt(2 * s2 - 1.0) - 1.0
        assert chi_square_divergence(logp, logq, grid) == pytest.approx(expected, abs=1e-4)

    def test_asymmetry(self):
        grid = QuadratureGrid((-12.0,), (12.0,), (4001,))
        nodes = grid.nodes()[:, 0]
        logp = -0.5 * nodes**2
        logq = -0.5 * nodes**2 / 1.2
        a = chi_square_divergence(logp, logq, grid)
        b = chi_square_divergence(logq, logp, grid)
        assert a != pytest.approx(b, rel=1e-3)

    def test_underflow_flagged_as_inf(self):
        grid = QuadratureGrid((-10.0, ), (30.0,), (2001,))
        nodes = grid.nodes()[:, 0]
        logp = -0.5 * nodes**2
        logq = -0.5 * (nodes - 20.0) ** 2 / 0.01
        with pytest.warns(ChiSquareDivergenceWarning):
            assert chi_square_divergence(logp, logq, grid) == math.inf

    def test_huge_values_flagged_as_inf(self):
        # Diverging-on-the-real-line pair that stays finite on the box: the
        # astronomical value is reported as the +inf flag.
        grid = QuadratureGrid((-14.0,), (14.0,), (2801,))
        nodes = grid.nodes()[:, 0]
        logp = -0.5 * nodes**2  # N(0,1)
        logq = -0.5 * nodes**2 * 3.0  # N(0,1/3): 2/v_p < 1/v_q
        with pytest.warns(ChiSquareDivergenceWarning):
            assert chi_square_divergence(logp, logq, grid) == math.inf

    def test_adjacency_on_scheme(self, symmetric_target, grid_sym):
        # Levels must be close for a finite chi^2: tilted component variances
        # 1/(1+2) vs 1/(1+1.5) here.
        ws = WarmStartSet(symmetric_target.modes)
        scheme = TemperingScheme(TemperatureLadder(np.array([2.0, 1.5, 0.0])), ws,
                                 np.ones((3, 2)), np.full(3, 1 / 3))
        val = adjacency_chi_square(scheme, symmetric_target, 1, 1, grid_sym)
        assert 0.0 < val < 1.0
        with pytest.raises(ConfigurationError):
            adjacency_chi_square(scheme, symmetric_target, 3, 1, grid_sym)


class TestSpectralGap:
    def test_two_state_textbook_gap(self):
        for p in (0.05, 0.2, 0.45):
            m = np.array([[1 - p, p], [p, 1 - p]])
            assert reversible_spectral_gap(m, np.array([0.5, 0.5])) == pytest.approx(2 * p)

    def test_projected_chain_rows_and_stationarity(self, symmetric_scheme,
                                                   symmetric_target, grid_sym):
        gap, chain = projected_spectral_gap(symmetric_scheme, symmetric_target, grid_sym)
        np.testing.assert_allclose(chain.matrix.sum(axis=1), 1.0, atol=1e-10)
        assert chain.stationarity_residual < 1e-8
        assert 0.0 < gap < 1.0

    def test_hand_assembled_four_cell_oracle(self, symmetric_target, grid_sym):
        # Independent assembly of the 4x4 projected matrix for the symmetric
        # L=2, M=2 instance, using plain trapezoid sums.
        ws = WarmStartSet(symmetric_target.modes)
        betas = [2.0, 0.0]
        scheme = TemperingScheme(TemperatureLadder(np.array(betas)), ws,
                                 np.ones((2, 2)), np.array([0.5, 0.5]))
        xs = np.linspace(-14.0, 14.0, 2801)
        centers = [-4.0, 4.0]

        def cell_density(i, k):
            comp = 0.5 * np.exp(-0.5 * (xs - centers[k]) ** 2) / math.sqrt(2 * math.pi)
            tilt = np.exp(-0.5 * betas[i] * (xs - centers[k]) ** 2)
            raw = comp * tilt
            z = np.trapezoid(raw, xs)
            return raw / z, z

        dens = {}
        zs = {}
        for i in range(2):
            for k in range(2):
                dens[(i, k)], zs[(i, k)] = cell_density(i, k)
        mass = np.array([0.5 * zs[(i, k)] for i in range(2) for k in range(2)])
        mass = mass / mass.sum()

        def shifted(i, k, delta):
            comp = 0.5 * np.exp(-0.5 * (xs + delta - centers[k]) ** 2) / math.sqrt(2 * math.pi)
            tilt = np.exp(-0.5 * betas[i] * (xs + delta - centers[k]) ** 2)
            return comp * tilt / zs[(i, k)]

        P = np.zeros((4, 4))
        idx = {(i, k): 2 * i + k for i in range(2) for k in range(2)}
        for i in range(2):
            for k in range(2):
                row = idx[(i, k)]
                for ip in (i - 1, i + 1):
                    if not 0 <= ip <= 1:
                        continue
                    integrand = np.minimum(
                        mass[idx[(ip, k)]] * dens[(ip, k)],
                        mass[idx[(i, k)]] * dens[(i, k)],
                    )
                    P[row, idx[(ip, k)]] = 0.5 * np.trapezoid(integrand, xs) / mass[row]
                if i == 0:
                    for kp in range(2):
                        if kp == k:
                            continue
                        delta = centers[kp] - centers[k]
                        integrand = np.minimum(
                            mass[idx[(0, kp)]] * shifted(0, kp, delta),
                            mass[idx[(0, k)]] * dens[(0, k)],
                        )
                        P[row, idx[(0, kp)]] = np.trapezoid(integrand, xs) / (4 * mass[row])
        np.fill_diagonal(P, 1.0 - P.sum(axis=1))
        d = np.sqrt(mass)
        sym = 0.5 * ((d[:, None] / d[None, :]) * P + ((d[:, None] / d[None, :]) * P).T)
        expected_gap = 1.0 - np.linalg.eigvalsh(sym)[-2]

        gap, chain = projected_spectral_gap(scheme, symmetric_target, grid_sym)
        np.testing.assert_allclose(chain.matrix, P, atol=5e-4)
        assert gap == pytest.approx(expected_gap, abs=5e-4)

    def test_teleport_detailed_balance_two_state(self, grid_sym):
        # Symmetric 2-mode translate instance, single level: pi P = pi to 1e-12.
        t = make_gaussian_mixture(
            GaussianMixtureSpec([[-4.0], [4.0]], [[[1.0]], [[1.0]]], [0.5, 0.5])
        )
        ws = WarmStartSet(t.modes)
        scheme = TemperingScheme(TemperatureLadder(np.array([2.0])), ws,
                                 np.ones((1, 2)), np.array([1.0]))
        _, chain = projected_spectral_gap(scheme, t, grid_sym)
        assert chain.matrix.shape == (2, 2)
        assert chain.stationarity_residual < 1e-12


class TestTVEstimate:
    def test_iid_baseline_calibration(self, symmetric_target):
        grid = QuadratureGrid((-10.0,), (10.0,), (101,))
        n = 20_000
        xs = symmetric_target.exact_sampler(np.random.default_rng(0), n)
        est = tv_estimate(batch_from_xs(xs), symmetric_target, grid)
        bins = 101
        assert est.value < 0.01 + 2.0 * math.sqrt(bins / n)
        assert not est.low_confidence

    def test_disjoint_support_logic(self, symmetric_target):
        grid = QuadratureGrid((-10.0,), (10.0,), (101,))
        xs = np.random.default_rng(1).normal(-4.0, 1.0, size=(5000, 1))
        est = tv_estimate(batch_from_xs(xs), symmetric_target, grid)
        assert est.value == pytest.approx(0.5, abs=0.05)

    def test_low_confidence_flag(self, symmetric_target):
        grid = QuadratureGrid((-10.0,), (10.0,), (51,))
        est = tv_estimate(batch_from_xs(np.zeros((10, 1))), symmetric_target, grid)
        assert est.low_confidence


class TestMixingReport:
    def test_autocorr_time_of_iid_is_near_one(self):
        x = np.random.default_rng(2).normal(size=20_000)
        assert integrated_autocorr_time(x) == pytest.approx(1.0, abs=0.15)

    def test_report_shape(self, symmetric_target, symmetric_scheme):
        rng = np.random.default_rng(3)
        xs = np.concatenate([rng.normal(-4, 1, 500), rng.normal(4, 1, 500)])[:, None]
        levels = np.tile([1, 2], 500).astype(np.int32)
        b = SampleBatch(np.arange(1000.0), levels, xs, np.zeros(1000, np.int8), 0, "t")
        rep = build_mixing_report(b, symmetric_scheme.warm_starts, symmetric_target,
                                  QuadratureGrid((-10.0,), (10.0,), (101,)))
        assert set(rep.mode_occupancy_per_level) == {1, 2}
        for occ in rep.mode_occupancy_per_level.values():
            assert sum(occ) == pytest.approx(1.0, abs=1e-9)
        assert rep.tv_target_level is not None
