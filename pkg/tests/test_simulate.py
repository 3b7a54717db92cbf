import io
import math

import numpy as np
import pytest

from hfhet.errors import DataError, ParameterError
from hfhet.simulate import (
    ConstantVol,
    Heston,
    JumpSpec,
    ModelSpec,
    NoiseSpec,
    SamplePath,
    SimGrid,
    overlay_jumps,
    overlay_noise,
    read_path_csv,
    simulate,
    simulate_constant,
    simulate_heston,
    write_path_csv,
)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestSimGrid:
    def test_dt_and_times(self):
        grid = SimGrid(4)
        assert grid.dt == 0.25
        assert np.array_equal(grid.times, [0.0, 0.25, 0.5, 0.75, 1.0])

    @pytest.mark.parametrize("n", [0, 1, -3, 2.5])
    def test_rejects_bad_n(self, n):
        with pytest.raises(ParameterError):
            SimGrid(n)


class TestConstant:
    def test_rejects_nonpositive_sigma(self):
        for sigma in (0.0, -1.0, math.nan, math.inf):
            with pytest.raises(ParameterError):
                simulate_constant(SimGrid(4), sigma, 1.0, rng())

    def test_vanishing_sigma_limit_keeps_path_at_x0(self):
        path = simulate_constant(SimGrid(64), 1e-300, 2.0, rng())
        assert np.allclose(path.obs, 2.0, atol=1e-290)

    def test_deterministic_given_seed(self):
        a = simulate_constant(SimGrid(512), 1.3, 0.0, rng(99))
        b = simulate_constant(SimGrid(512), 1.3, 0.0, rng(99))
        assert np.array_equal(a.obs, b.obs)

    def test_increment_variance_matches_sigma2_dt(self):
        # Monte Carlo oracle: pooled second moment of increments is sigma^2/n
        n, paths = 23400, 200
        pooled = np.concatenate(
            [np.diff(simulate_constant(SimGrid(n), 1.0, 1.0, rng(1000 + i)).obs) for i in range(paths)]
        )
        assert np.mean(pooled**2) == pytest.approx(1.0 / n, rel=0.05)

    def test_increment_kurtosis_is_gaussian(self):
        n = 10000
        z = np.diff(simulate_constant(SimGrid(n), 2.0, 0.0, rng(7)).obs) / (2.0 / math.sqrt(n))
        kurtosis = np.mean(z**4) / np.mean(z**2) ** 2
        assert kurtosis == pytest.approx(3.0, abs=0.2)

    def test_true_spot_var_records_sigma_squared(self):
        path = simulate_constant(SimGrid(8), 1.5, 0.0, rng())
        assert np.all(path.true_spot_var == 2.25)


class TestHeston:
    def test_vanishing_vol_of_vol_freezes_variance_at_alpha(self):
        params = Heston(kappa=5.0, alpha=0.04, gamma=1e-14, rho=0.0, v0=0.04)
        path = simulate_heston(SimGrid(256), params, rng(3))
        assert np.allclose(path.true_spot_var, 0.04, atol=1e-12)

    def test_paper_calibration_clamps_negative_proposals(self):
        path = simulate_heston(SimGrid(23400), Heston(), rng(5), rng(6))
        assert np.all(path.true_spot_var >= 0.0)
        # the Feller-violating calibration pins the state at zero often
        assert np.mean(path.true_spot_var == 0.0) > 0.1

    def test_time_average_variance_between_alpha_and_v0(self):
        # mean-reversion oracle: E v_t = alpha + (v0-alpha) e^{-kappa t}
        means = []
        for i in range(200):
            path = simulate_heston(SimGrid(2340), Heston(), rng(2000 + i), rng(7000 + i))
            means.append(path.true_spot_var[:-1].mean())
        assert 0.04 < np.mean(means) < 1.0

    def test_rejects_wrong_params_type(self):
        with pytest.raises(ParameterError):
            simulate_heston(SimGrid(16), "not params", rng())

    @pytest.mark.parametrize("kwargs", [dict(kappa=-1), dict(alpha=0), dict(gamma=0), dict(rho=1.5), dict(v0=0)])
    def test_rejects_bad_params(self, kwargs):
        with pytest.raises(ParameterError):
            Heston(**kwargs)


class _OneJumpRng:
    """Stub random source emitting exactly one jump of a chosen size/time."""

    def __init__(self, time, size):
        self.time, self.size = time, size

    def poisson(self, lam):
        return 1

    def random(self, count):
        return np.array([self.time])

    def standard_normal(self, count):
        return np.array([self.size])


def flat_path(n, level=0.0):
    return SamplePath(grid=SimGrid(n), obs=np.full(n + 1, level))


class TestJumps:
    def test_zero_intensity_returns_path_unchanged(self):
        path = flat_path(10)
        assert overlay_jumps(path, 0.0, 0.5, rng()) is path

    def test_forced_jump_lands_in_covering_increment(self):
        # jump of size 0.5 at tau = 0.55 on a flat path with n=10: increment 6
        out = overlay_jumps(flat_path(10), 5.0, 0.5, _OneJumpRng(0.55, 1.0))
        d = np.diff(out.obs)
        assert d[5] == pytest.approx(0.5, abs=1e-15)
        assert np.all(d[np.arange(10) != 5] == 0.0)

    def test_jump_exactly_on_grid_point_goes_to_that_increment(self):
        out = overlay_jumps(flat_path(10), 5.0, 0.5, _OneJumpRng(0.5, 1.0))
        d = np.diff(out.obs)
        assert d[4] == pytest.approx(0.5, abs=1e-15)

    def test_mean_jump_count_matches_intensity(self):
        # Poisson mean oracle at lambda=20
        counts = []
        for i in range(500):
            out = overlay_jumps(flat_path(4680), 20.0, 0.5, rng(3000 + i))
            counts.append(np.count_nonzero(np.diff(out.obs)))
        assert np.mean(counts) == pytest.approx(20.0, abs=1.0)

    def test_labels_record_overlay(self):
        out = overlay_jumps(flat_path(10), 5.0, 0.5, _OneJumpRng(0.3, 1.0))
        assert out.labels[-1] == "jumps"

    def test_changes_only_from_first_bucket_on(self):
        base = simulate_constant(SimGrid(500), 1.0, 0.0, rng(11))
        out = overlay_jumps(base, 3.0, 0.5, rng(12))
        delta = out.obs - base.obs
        first = np.nonzero(delta)[0]
        assert first.size > 0
        assert np.all(delta[: first[0]] == 0.0)


class TestNoise:
    def test_zero_eta_returns_path_unchanged(self):
        path = flat_path(10)
        assert overlay_noise(path, 0.0, rng()) is path

    def test_noise_rv_on_flat_path(self):
        # E (eps_i - eps_{i-1})^2 = 2 eta^2, summed over n increments
        n, eta = 23400, 0.01
        rvs = []
        for i in range(50):
            out = overlay_noise(flat_path(n), eta, rng(4000 + i))
            d = np.diff(out.obs)
            rvs.append(np.dot(d, d))
        assert np.mean(rvs) == pytest.approx(2 * n * eta**2, rel=0.02)

    def test_reproducible_noise(self):
        a = overlay_noise(flat_path(100), 0.05, rng(1)).obs
        b = overlay_noise(flat_path(100), 0.05, rng(1)).obs
        assert np.array_equal(a, b)


class TestMasterSimulate:
    def test_bit_identical_for_identical_spec_and_seed(self):
        spec = ModelSpec(Heston(), jump=JumpSpec(20.0, 0.5), noise=NoiseSpec(0.01))
        a = simulate(spec, 1170, 77)
        b = simulate(spec, 1170, 77)
        assert np.array_equal(a.obs, b.obs)
        assert a.labels == ("heston", "jumps", "noise")

    def test_jump_overlay_does_not_perturb_base_diffusion(self):
        base = simulate(ModelSpec(ConstantVol()), 2000, 123)
        jumped = simulate(ModelSpec(ConstantVol(), jump=JumpSpec(20.0, 0.5)), 2000, 123)
        stair = jumped.obs - base.obs
        # pure staircase: flat between jumps, and far fewer steps than grid points
        steps = np.count_nonzero(np.diff(stair))
        assert 0 < steps < 60

    def test_noise_overlay_does_not_perturb_base_plus_jumps(self):
        spec_j = ModelSpec(ConstantVol(), jump=JumpSpec(5.0, 0.5))
        spec_jn = ModelSpec(ConstantVol(), jump=JumpSpec(5.0, 0.5), noise=NoiseSpec(0.01))
        a = simulate(spec_j, 500, 9)
        b = simulate(spec_jn, 500, 9)
        eps = b.obs - a.obs
        assert np.std(eps) == pytest.approx(0.01, rel=0.2)

    def test_seed_sequence_accepted(self):
        seq = np.random.SeedSequence(5, spawn_key=(1, 2))
        a = simulate(ModelSpec(ConstantVol()), 64, seq)
        b = simulate(ModelSpec(ConstantVol()), 64, np.random.SeedSequence(5, spawn_key=(1, 2)))
        assert np.array_equal(a.obs, b.obs)


class TestSamplePathValidation:
    def test_rejects_wrong_length(self):
        with pytest.raises(DataError):
            SamplePath(grid=SimGrid(4), obs=np.zeros(4))

    def test_rejects_non_finite(self):
        obs = np.zeros(5)
        obs[2] = np.nan
        with pytest.raises(DataError):
            SamplePath(grid=SimGrid(4), obs=obs)

    def test_rejects_negative_true_spot_var(self):
        with pytest.raises(DataError):
            SamplePath(grid=SimGrid(4), obs=np.zeros(5), true_spot_var=np.array([1, 1, -1, 1, 1.0]))


class TestPathCsv:
    def test_round_trip_is_exact(self):
        path = simulate(ModelSpec(Heston()), 64, 3)
        buffer = io.StringIO()
        write_path_csv(path, buffer)
        buffer.seek(0)
        back = read_path_csv(buffer)
        assert np.array_equal(back.obs, path.obs)
        assert np.array_equal(back.true_spot_var, path.true_spot_var)

    def test_reader_skips_comment_lines(self):
        text = "# config: {}\n# labels: constant\nindex,time,obs\n0,0.0,1.0\n1,0.5,1.5\n2,1.0,2.0\n"
        path = read_path_csv(io.StringIO(text))
        assert path.n == 2
        assert np.array_equal(path.obs, [1.0, 1.5, 2.0])

    def test_reader_rejects_bad_header(self):
        with pytest.raises(DataError):
            read_path_csv(io.StringIO("a,b,c\n1,2,3\n"))
