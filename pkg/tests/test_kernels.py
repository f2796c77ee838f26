import math

import numpy as np
import pytest
import scipy.stats

from realps.errors import ConfigurationError, SimulationError
from realps.kernels import (
    ChainState,
    KernelConfig,
    NaivePowerDynamics,
    Recorder,
    SampleBatch,
    level_swap,
    run_dynamics,
    rwm_step,
    simulate,
    teleport,
)
from realps.targets import GaussianMixtureSpec, TargetModel, make_gaussian_mixture
from realps.tilting import TemperatureLadder, TemperingScheme, WarmStartSet, \
    log_tempered_density


class FakeRng:
    """Plays back scripted draws; fails loudly when a queue runs dry."""

    def __init__(self, normals=(), uniforms=(), ints=()):
        self.normals = list(normals)
        self.uniforms = list(uniforms)
        self.ints = list(ints)

    def standard_normal(self, size):
        return np.asarray(self.normals.pop(0), dtype=float).reshape(size)

    def random(self):
        return self.uniforms.pop(0)

    def integers(self, *args, **kwargs):
        return self.ints.pop(0)


@pytest.fixture()
def std_normal_target():
    return make_gaussian_mixture(GaussianMixtureSpec([[0.0]], [[[1.0]]], [1.0]))


@pytest.fixture()
def single_level_scheme(std_normal_target):
    ladder = TemperatureLadder(np.array([0.0]))
    ws = WarmStartSet(np.array([[0.0]]))
    return TemperingScheme(ladder, ws, np.ones((1, 1)), np.array([1.0]))


def make_cfg(**kw):
    base = dict(lambda_swap=1.0, gamma_leap=1.0, rwm_step_scale=1.0,
                steps_per_unit_time=10, seed=0)
    base.update(kw)
    return KernelConfig(**base)


class TestRwmStep:
    def test_uphill_always_accepted(self, std_normal_target, single_level_scheme):
        state = ChainState(x=np.array([3.0]), level=1)
        rng = FakeRng(normals=[[-1.0]], uniforms=[0.999999])
        new, rec = rwm_step(state, single_level_scheme, std_normal_target, make_cfg(), rng)
        assert rec.kind == "rwm_accept"
        assert new.x[0] == pytest.approx(2.0)

    def test_zero_step_accepted_unchanged(self, std_normal_target, single_level_scheme):
        state = ChainState(x=np.array([1.5]), level=1)
        rng = FakeRng(normals=[[0.0]], uniforms=[0.5])
        new, rec = rwm_step(state, single_level_scheme, std_normal_target, make_cfg(), rng)
        assert rec.kind == "rwm_accept"
        assert new.x[0] == state.x[0]

    def test_level_unchanged(self, std_normal_target, single_level_scheme):
        state = ChainState(x=np.array([0.0]), level=1)
        rng = FakeRng(normals=[[0.7]], uniforms=[0.01])
        new, _ = rwm_step(state, single_level_scheme, std_normal_target, make_cfg(), rng)
        assert new.level == 1

    def test_long_run_mean_matches_target(self, std_normal_target, single_level_scheme):
        # Exact-moment oracle: N(0,1) has mean 0; allow 3 effective sigmas.
        from realps.diagnostics import integrated_autocorr_time

        cfg = make_cfg(lambda_swap=1e-12, gamma_leap=1e-12, rwm_step_scale=2.4,
                       steps_per_unit_time=1, seed=11)
        batch = simulate(ChainState(x=np.array([0.0]), level=1), single_level_scheme,
                         std_normal_target, cfg, 20_000.0)
        xs = batch.xs[:, 0]
        tau = integrated_autocorr_time(xs)
        n_eff = len(xs) / tau
        assert abs(xs.mean()) < 3.0 / math.sqrt(n_eff)


@pytest.fixture()
def two_level_scheme(std_normal_target):
    ladder = TemperatureLadder(np.array([1.0, 0.0]))
    ws = WarmStartSet(np.array([[0.0]]))
    return TemperingScheme(ladder, ws, np.ones((2, 1)), np.array([0.5, 0.5]))


class TestLevelSwap:
    def test_equal_joint_density_accepts(self, std_normal_target, two_level_scheme):
        # At the tilt center the tilt vanishes, so both levels have equal joint mass.
        state = ChainState(x=np.array([0.0]), level=1)
        rng = FakeRng(uniforms=[0.2, 0.999999])  # direction=up, u close to 1
        new, rec = level_swap(state, two_level_scheme, std_normal_target, rng)
        assert rec.kind == "swap_up_accept"
        assert new.level == 2

    def test_half_ratio_accept_reject_branches(self, std_normal_target, two_level_scheme):
        # From the target level down to beta=1 at ||x|| = sqrt(2 ln 2): ratio 0.5.
        x = math.sqrt(2.0 * math.log(2.0))
        state = ChainState(x=np.array([x]), level=2)
        accept_rng = FakeRng(uniforms=[0.7, 0.49])  # direction=down, u < 0.5
        new, rec = level_swap(state, two_level_scheme, std_normal_target, accept_rng)
        assert rec.kind == "swap_down_accept" and new.level == 1
        reject_rng = FakeRng(uniforms=[0.7, 0.51])
        new, rec = level_swap(state, two_level_scheme, std_normal_target, reject_rng)
        assert rec.kind == "swap_down_reject" and new.level == 2

    def test_boundary_auto_reject(self, std_normal_target, two_level_scheme):
        state = ChainState(x=np.array([0.0]), level=1)
        rng = FakeRng(uniforms=[0.7, 0.5])  # downward proposal off the ladder
        new, rec = level_swap(state, two_level_scheme, std_normal_target, rng)
        assert rec.kind == "swap_down_reject"
        assert new.level == 1

    def test_record_levels_consistent(self, std_normal_target, two_level_scheme):
        rng = np.random.default_rng(0)
        state = ChainState(x=np.array([0.3]), level=1)
        for _ in range(200):
            state, rec = level_swap(state, two_level_scheme, std_normal_target, rng)
            if rec.kind.endswith("accept"):
                assert abs(rec.level_after - rec.level_before) == 1
            else:
                assert rec.level_after == rec.level_before


@pytest.fixture()
def translate_mixture():
    # Equal-weight mixture of exact translates: teleports are always accepted.
    spec = GaussianMixtureSpec(
        means=[[-6.0], [6.0]], covariances=[[[1.0]], [[1.0]]], weights=[0.5, 0.5]
    )
    target = make_gaussian_mixture(spec)
    ladder = TemperatureLadder(np.array([4.0, 0.0]))
    ws = WarmStartSet(np.array([[-6.0], [6.0]]))
    scheme = TemperingScheme(ladder, ws, np.ones((2, 2)), np.array([0.5, 0.5]))
    return target, scheme


class TestTeleport:
    def test_exact_translates_always_accept(self, translate_mixture):
        # Perfect overlap: with the state near the drawn source mode j, the
        # translated density matches and every pair (j, j') is accepted.
        target, scheme = translate_mixture
        centers = scheme.warm_starts.centers
        for j in range(2):
            state = ChainState(x=centers[j] + 0.3, level=1)
            for jp in range(2):
                rng = FakeRng(ints=[j, jp], uniforms=[1.0 - 1e-12])
                _, rec = teleport(state, scheme, target, rng)
                assert rec.kind == "leap_accept"
                assert rec.mode_pair == (j, jp)

    def test_source_mismatch_rejects_into_empty_space(self, translate_mixture):
        # Uniform pair selection can draw a source that is not the current
        # mode; the translated point then lands far from every mode.
        target, scheme = translate_mixture
        state = ChainState(x=np.array([-5.7]), level=1)  # near mode 0
        rng = FakeRng(ints=[1, 0], uniforms=[0.5])
        new, rec = teleport(state, scheme, target, rng)
        assert rec.kind == "leap_reject"
        assert new.x[0] == state.x[0]

    def test_identity_pair_is_noop_accept(self, translate_mixture):
        target, scheme = translate_mixture
        state = ChainState(x=np.array([-5.0]), level=1)
        rng = FakeRng(ints=[1, 1], uniforms=[0.9])
        new, rec = teleport(state, scheme, target, rng)
        assert rec.kind == "leap_accept"
        assert new.x[0] == state.x[0]

    def test_wrong_level_rejected(self, translate_mixture):
        target, scheme = translate_mixture
        state = ChainState(x=np.array([-5.0]), level=2)
        with pytest.raises(ConfigurationError):
            teleport(state, scheme, target, np.random.default_rng(0))

    def test_acceptance_against_density_ratio_oracle(
    self, bottleneck_target, bottleneck_warm_starts):
        # Unequal-variance mixture: the MH threshold equals the tempered-density
        # ratio evaluated directly at the two points.
        ladder = TemperatureLadder(np.array([4.0, 0.0]))
        scheme = TemperingScheme(ladder, bottleneck_warm_starts,
                                 np.ones((2, 2)), np.array([0.5, 0.5]))
        x = np.array([-4.6])
        x_new = np.array([5.4])  # x - (-5) + 5
        ratio = math.exp(
            log_tempered_density(scheme, bottleneck_target, 1, x_new)
            - log_tempered_density(scheme, bottleneck_target, 1, x)
        )
        assert 0.0 < ratio < 1.0
        state = ChainState(x=x, level=1)
        below = FakeRng(ints=[0, 1], uniforms=[ratio * (1 - 1e-9)])
        _, rec = teleport(state, scheme, bottleneck_target, below)
        assert rec.kind == "leap_accept"
        above = FakeRng(ints=[0, 1], uniforms=[min(1.0 - 1e-12, ratio * (1 + 1e-9))])
        _, rec = teleport(state, scheme, bottleneck_target, above)
        assert rec.kind == "leap_reject"


class TestSimulate:
    def test_tiny_swap_rate_never_leaves_target_level(self, std_normal_target):
        ladder = TemperatureLadder(np.array([2.0, 1.0, 0.0]))
        ws = WarmStartSet(np.array([[0.0]]))
        scheme = TemperingScheme(ladder, ws, np.ones((3, 1)), np.full(3, 1 / 3))
        cfg = make_cfg(lambda_swap=1e-12, gamma_leap=1e-12, seed=3,
                       steps_per_unit_time=1)
        batch = simulate(ChainState(x=np.array([0.0]), level=3), scheme,
                         std_normal_target, cfg, 1000.0)
        assert np.all(batch.levels == 3)
        assert batch.acceptance_rates()["swap"] != batch.acceptance_rates()["swap"]  # NaN

    def test_no_teleport_means_no_mode_crossing(self, translate_mixture):
        target, scheme = translate_mixture
        sub = scheme.restrict(1)
        cfg = make_cfg(seed=5, rwm_step_scale=0.4)
        batch = simulate(ChainState(x=np.array([-6.0]), level=1), sub, target, cfg,
                         500.0, enable_teleport=False)
        # Coldest level, modes 12 sigma-units apart: the chain cannot cross.
        assert np.all(batch.xs[:, 0] < 0)

    def test_swap_proposal_counts_match_poisson_rate(self, std_normal_target,
                                                     two_level_scheme):
        lam, horizon, n_seeds = 2.5, 20.0, 50
        counts = []
        for seed in range(n_seeds):
            cfg = make_cfg(lambda_swap=lam, gamma_leap=1e-9, seed=seed,
                           steps_per_unit_time=1)
            batch = simulate(ChainState(x=np.array([0.0]), level=2), two_level_scheme,
                             std_normal_target, cfg, horizon)
            swap_codes = [i for i in range(len(batch))
                          if batch.event_name(i).startswith("swap")]
            counts.append(len(swap_codes))
        mean = np.mean(counts)
        assert abs(mean - lam * horizon) < 4.0 * math.sqrt(lam * horizon / n_seeds)

    def test_bit_reproducibility(self, translate_mixture, tmp_path):
        target, scheme = translate_mixture
        cfg = make_cfg(seed=42, lambda_swap=2.0, gamma_leap=2.0)
        runs = []
        for _ in range(2):
            batch = simulate(ChainState(x=np.array([-6.0]), level=1), scheme, target,
                             cfg, 50.0)
            p = tmp_path / f"run{len(runs)}.jsonl"
            batch.to_jsonl(p)
            runs.append((batch, p.read_bytes()))
        b1, bytes1 = runs[0]
        b2, bytes2 = runs[1]
        np.testing.assert_array_equal(b1.xs, b2.xs)
        np.testing.assert_array_equal(b1.events, b2.events)
        np.testing.assert_array_equal(b1.times, b2.times)
        assert bytes1 == bytes2

    def test_level_occupancy_matches_balanced_weights(self, std_normal_target):
        # r_i proportional to 1/Z_i (closed form for Gaussian-tilted normal)
        # makes the level marginal uniform.
        betas = np.array([2.0, 1.0, 0.0])
        z = (1.0 + betas) ** -0.5
        ladder = TemperatureLadder(betas)
        ws = WarmStartSet(np.array([[0.0]]))
        r = (1.0 / z) / (1.0 / z).sum()
        scheme = TemperingScheme(ladder, ws, np.ones((3, 1)), r)
        cfg = make_cfg(seed=9, lambda_swap=2.0, rwm_step_scale=1.2,
                       steps_per_unit_time=5)
        batch = simulate(ChainState(x=np.array([0.0]), level=1), scheme,
                         std_normal_target, cfg, 4000.0)
        local = batch.events <= 1  # rwm records weight levels by time
        occ = np.bincount(batch.levels[local], minlength=4)[1:4]
        occ = occ / occ.sum()
        assert np.all(np.abs(occ - 1 / 3) < 0.05)

    def test_ks_stationarity_moderate(self, std_normal_target, single_level_scheme):
        cfg = make_cfg(lambda_swap=1e-12, gamma_leap=1e-12, rwm_step_scale=2.4,
                       steps_per_unit_time=1, seed=17)
        rec = Recorder(record_local_every=6)
        batch = simulate(ChainState(x=np.array([0.0]), level=1), single_level_scheme,
                         std_normal_target, cfg, 30_000.0, recorder=rec)
        stat = scipy.stats.kstest(batch.xs[:, 0], "norm")
        assert stat.pvalue > 0.01

    def test_nan_density_aborts_with_state_dump(self):
        bad = TargetModel(dim=1, log_density=lambda x: float("nan"))
        ws = WarmStartSet(np.array([[0.0]]))
        scheme = TemperingScheme(TemperatureLadder(np.array([0.0])), ws,
                                 np.ones((1, 1)), np.array([1.0]))
        with pytest.raises(SimulationError, match="level=1"):
            simulate(ChainState(x=np.array([0.0]), level=1), scheme, bad,
                     make_cfg(), 1.0)

    def test_duration_positive_required(self, std_normal_target, single_level_scheme):
        with pytest.raises(ConfigurationError):
            simulate(ChainState(x=np.array([0.0]), level=1), single_level_scheme,
                     std_normal_target, make_cfg(), 0.0)


class TestNaivePowerDynamics:
    def test_ladder_validation(self, std_normal_target):
        with pytest.raises(ConfigurationError):
            NaivePowerDynamics(std_normal_target, [0.5, 0.9], make_cfg())
        with pytest.raises(ConfigurationError):
            NaivePowerDynamics(std_normal_target, [1.0, 0.5], make_cfg())

    def test_target_level_density_is_target(self, std_normal_target):
        dyn = NaivePowerDynamics(std_normal_target, [0.5, 1.0], make_cfg())
        x = np.array([0.7])
        assert dyn.log_joint(2, x) == pytest.approx(float(std_normal_target.log_density(x)))
        assert dyn.log_joint(1, x) == pytest.approx(0.5 * float(std_normal_target.log_density(x)))

    def test_runs_without_teleport(self, std_normal_target):
        dyn = NaivePowerDynamics(std_normal_target, [0.5, 1.0], make_cfg(seed=2))
        batch = run_dynamics(dyn, ChainState(x=np.array([0.0]), level=2),
                             make_cfg(seed=2), 50.0)
        assert not any(batch.event_name(i).startswith("leap") for i in range(len(batch)))


class TestSampleBatchIO:
    def test_jsonl_roundtrip(self, translate_mixture, tmp_path):
        target, scheme = translate_mixture
        cfg = make_cfg(seed=1)
        batch = simulate(ChainState(x=np.array([-6.0]), level=1), scheme, target,
                         cfg, 20.0)
        p = tmp_path / "samples.jsonl"
        batch.to_jsonl(p)
        back = SampleBatch.from_jsonl(p)
        np.testing.assert_allclose(back.xs, batch.xs)
        np.testing.assert_array_equal(back.levels, batch.levels)
        np.testing.assert_array_equal(back.events, batch.events)
        assert back.seed == batch.seed and back.scheme_tag == batch.scheme_tag
