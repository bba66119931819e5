import numpy as np
import pytest

from filterlab.bayes import GridDensity
from filterlab.classical import (FilterState, ObservationModel,
                                 TrajectoryRecord, dmz_run, dmz_step,
                                 kalman_bucy_reference, ks_log_weight,
                                 kushner_run, normalize, pi_of,
                                 simulate_truth_and_observation)
from filterlab.errors import PreconditionError
from filterlab.sde import DiffusionSpec, Path, wiener_path
from filterlab.seeds import RngStream


def gaussian_prior(lo, hi, mean, var, n=512):
    shell = GridDensity(lo, hi, np.zeros(n))
    return GridDensity(lo, hi,
                       np.exp(-(shell.x - mean) ** 2 / (2 * var))).normalized()


LINEAR = dict(a=1.0, c=1.0, sig=0.5)


def linear_spec(x0=0.0):
    return DiffusionSpec(lambda x: -LINEAR["a"] * x,
                         lambda x: LINEAR["sig"] + 0.0 * x, x0)


def linear_obs():
    return ObservationModel(lambda x: LINEAR["c"] * x)


class TestSimulation:
    def test_pure_noise_record(self):
        spec = linear_spec()
        obs = ObservationModel(lambda x: 0.0 * x)
        _, rec = simulate_truth_and_observation(spec, obs, 1.0, 1e-2,
                                                RngStream(1, 0))
        # h = 0 leaves only the observation Wiener increments
        z = wiener_path(1.0, 1e-2, RngStream(1, 1))
        assert np.allclose(rec.dY, np.diff(z.values))

    def test_constant_state_slope_recovered(self):
        spec = DiffusionSpec(lambda x: 0.0, lambda x: 0.0, 1.3)
        obs = ObservationModel(lambda x: 2.0 * x)
        slopes = []
        for i in range(200):
            _, rec = simulate_truth_and_observation(spec, obs, 1.0, 1e-2,
                                                    RngStream(40, 2 * i))
            slopes.append(np.sum(rec.dY))
        se = np.std(slopes, ddof=1) / np.sqrt(len(slopes))
        assert abs(np.mean(slopes) - 2.6) < 4 * se

    def test_seed_reproducibility(self):
        a = simulate_truth_and_observation(linear_spec(), linear_obs(), 1.0,
                                           1e-2, RngStream(9, 0))
        b = simulate_truth_and_observation(linear_spec(), linear_obs(), 1.0,
                                           1e-2, RngStream(9, 0))
        assert np.array_equal(a[1].dY, b[1].dY)
        assert np.array_equal(a[0].values, b[0].values)


class TestDmzStep:
    def test_no_observation_is_prediction(self):
        prior = gaussian_prior(-4, 4, 0.0, 0.5)
        fs = FilterState(prior, 0.0)
        obs = ObservationModel(lambda x: 0.0 * x)
        out = dmz_step(fs, 0.37, linear_spec(), obs, 1e-3)
        # h = 0 makes the update factor exactly 1, pure Fokker-Planck motion
        base = dmz_step(fs, 0.0, linear_spec(), obs, 1e-3)
        assert np.array_equal(out.sigma.values, base.sigma.values)

    def test_projective_invariance(self):
        prior = gaussian_prior(-4, 4, 0.2, 0.5)
        scaled = GridDensity(-4, 4, prior.values * 17.0)
        rec_dy = [0.01, -0.02, 0.005]
        a = FilterState(prior, 0.0)
        b = FilterState(scaled, 0.0)
        for dy in rec_dy:
            a = dmz_step(a, dy, linear_spec(), linear_obs(), 1e-3)
            b = dmz_step(b, dy, linear_spec(), linear_obs(), 1e-3)
        na, nb = normalize(a), normalize(b)
        assert np.max(np.abs(na.values - nb.values)) < 1e-10

    def test_point_mass_tracks_ks_weight(self):
        # frozen state: filter mass at x equals the pathwise likelihood weight
        x_star = 0.8
        spec = DiffusionSpec(lambda x: 0.0 * x, lambda x: 0.0 * x, x_star)
        obs = ObservationModel(lambda x: x)
        n, lo, hi = 401, 0.0, 1.6
        shell = GridDensity(lo, hi, np.zeros(n))
        vals = np.zeros(n)
        vals[np.argmin(np.abs(shell.x - x_star))] = 1.0 / shell.dx
        fs = FilterState(GridDensity(lo, hi, vals), 0.0)
        dt = 1e-3
        rng = np.random.default_rng(0)
        dY = x_star * dt + rng.standard_normal(300) * np.sqrt(dt)
        mass0 = fs.sigma.integral()
        log_factor = 0.0
        for dy in dY:
            fs = dmz_step(fs, dy, spec, obs, dt)
            log_factor += np.log1p(x_star * dy)
        # discrete multiplicative weight prod(1 + h dY) matches the mass ratio
        assert np.log(fs.sigma.integral() / mass0) == pytest.approx(
            log_factor, abs=1e-8)
        # and agrees with the exponential log-weight to O(dt) per step
        x_path = Path(0.0, dt, np.full(len(dY) + 1, x_star))
        rec = TrajectoryRecord(dt, x_path.times, dY)
        assert np.log(fs.sigma.integral() / mass0) == pytest.approx(
            ks_log_weight(x_path, rec, obs), abs=0.02)


class TestNormalize:
    def test_uniform(self):
        fs = FilterState(GridDensity(0, 1, np.full(64, 3.0)), 0.0)
        out = normalize(fs)
        assert out.integral() == pytest.approx(1.0, abs=1e-12)

    def test_pi_of_quadrature(self):
        d = gaussian_prior(-5, 5, 0.7, 0.3)
        assert pi_of(d, lambda x: x) == pytest.approx(0.7, abs=1e-6)


class TestKushner:
    def test_unit_functional_preserved(self):
        prior = gaussian_prior(-4, 4, 0.0, 0.5)
        _, rec = simulate_truth_and_observation(linear_spec(), linear_obs(),
                                                0.5, 1e-3, RngStream(3, 0))
        out = kushner_run(prior, linear_spec(), linear_obs(), rec,
                          {"one": lambda x: np.ones_like(x)})
        assert np.max(np.abs(out.pi["one"] - 1.0)) < 1e-12

    def test_innovations_definition(self):
        prior = gaussian_prior(-4, 4, 0.0, 0.5)
        _, rec = simulate_truth_and_observation(linear_spec(), linear_obs(),
                                                0.3, 1e-3, RngStream(4, 0))
        out = kushner_run(prior, linear_spec(), linear_obs(), rec,
                          {"m": lambda x: x})
        assert out.dI.shape == rec.dY.shape
        assert np.all(np.isfinite(out.dI))

    def test_agrees_with_dmz(self):
        prior = gaussian_prior(-4, 4, 0.0, 0.5)
        _, rec = simulate_truth_and_observation(linear_spec(), linear_obs(),
                                                1.0, 1e-3, RngStream(5, 0))
        f = {"m": lambda x: x}
        a = kushner_run(prior, linear_spec(), linear_obs(), rec, f)
        b = dmz_run(prior, linear_spec(), linear_obs(), rec, f)
        assert np.max(np.abs(a.pi["m"] - b.pi["m"])) < 5e-3

    def test_unnormalized_prior_rejected(self):
        with pytest.raises(PreconditionError):
            kushner_run(GridDensity(-1, 1, np.full(32, 3.0)), linear_spec(),
                        linear_obs(), TrajectoryRecord(0.1, [0.0, 0.1], [0.0]),
                        {})


class TestKsWeight:
    def test_no_observation_drift(self):
        x = Path(0, 0.1, np.zeros(11))
        rec = TrajectoryRecord(0.1, x.times, np.random.default_rng(0)
                               .standard_normal(10) * 0.3)
        assert ks_log_weight(x, rec, ObservationModel(lambda x: 0.0 * x)) == 0.0

    def test_constant_path_closed_form(self):
        h0, T, dt = 1.4, 1.0, 0.01
        n = int(T / dt)
        dY = np.random.default_rng(1).standard_normal(n) * np.sqrt(dt)
        x = Path(0, dt, np.zeros(n + 1))
        rec = TrajectoryRecord(dt, x.times, dY)
        w = ks_log_weight(x, rec, ObservationModel(lambda x: h0 + 0.0 * x))
        assert w == pytest.approx(h0 * np.sum(dY) - 0.5 * h0 ** 2 * T, abs=1e-12)

    def test_particle_estimate_matches_grid(self):
        # importance-weighted prior particles against the grid filter
        spec = linear_spec()
        obs = linear_obs()
        T, dt = 0.5, 1e-3
        _, rec = simulate_truth_and_observation(spec, obs, T, dt, RngStream(6, 0))
        prior = gaussian_prior(-4, 4, 0.0, 0.5)
        grid = dmz_run(prior, spec, obs, rec, {"m": lambda x: x})
        m = 4000
        rng = np.random.default_rng(7)
        logw = np.empty(m)
        xs_T = np.empty(m)
        for i in range(m):
            x0 = rng.normal(0.0, np.sqrt(0.5))
            xi = rng.standard_normal(len(rec.dY))
            path = np.empty(len(rec.dY) + 1)
            path[0] = x0
            for k in range(len(rec.dY)):
                path[k + 1] = path[k] - path[k] * dt + 0.5 * np.sqrt(dt) * xi[k]
            p = Path(0, dt, path)
            logw[i] = ks_log_weight(p, rec, obs)
            xs_T[i] = path[-1]
        w = np.exp(logw - logw.max())
        particle_mean = np.sum(w * xs_T) / np.sum(w)
        assert particle_mean == pytest.approx(grid.pi["m"][-1], abs=0.05)


class TestKalmanBucy:
    def test_no_observation_lyapunov(self):
        n = 1000
        dt = 1e-3
        rec = TrajectoryRecord(dt, np.arange(n + 1) * dt, np.zeros(n))
        _, P = kalman_bucy_reference(1.0, 0.0, 0.5, 0.0, 0.3, rec)
        t = np.arange(n + 1) * dt
        # dP/dt = -2aP + sig^2 solves to the usual exponential relaxation
        expected = 0.125 + (0.3 - 0.125) * np.exp(-2 * t)
        assert np.max(np.abs(P - expected)) < 1e-3

    def test_stationary_variance(self):
        a, c, sig = 1.0, 1.0, 0.5
        p_star = (-2 * a + np.sqrt(4 * a ** 2 + 4 * c ** 2 * sig ** 2)) / (2 * c ** 2)
        n = 8000
        dt = 1e-3
        rec = TrajectoryRecord(dt, np.arange(n + 1) * dt, np.zeros(n))
        _, P = kalman_bucy_reference(a, c, sig, 0.0, 0.3, rec)
        assert P[-1] == pytest.approx(p_star, abs=1e-4)

    def test_matches_kushner_on_benchmark(self):
        spec = linear_spec()
        obs = linear_obs()
        _, rec = simulate_truth_and_observation(spec, obs, 1.0, 1e-3,
                                                RngStream(8, 0))
        n = 1024
        prior = gaussian_prior(-2.5, 2.5, 0.0, 0.25, n=n)
        out = kushner_run(prior, spec, obs, rec,
                          {"m": lambda x: x, "s2": lambda x: x ** 2})
        km, kv = kalman_bucy_reference(1.0, 1.0, 0.5, 0.0, 0.25, rec)
        tol = max(5e-3, 3 * prior.dx)
        assert np.max(np.abs(out.pi["m"] - km)) <= tol
        var_path = out.pi["s2"] - out.pi["m"] ** 2
        assert np.max(np.abs(var_path - kv)) <= 1e-2
