import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp

from cyberinvest import (
    AttackPath,
    HawkesParams,
    StabilityError,
    count_variance,
    expected_count,
    expected_intensity,
    intensity_variance,
    lambda_max_heuristic,
    simulate_path,
    simulate_paths,
)

STD = HawkesParams(27.0, 27.0, 15.0, 9.0)


def exact_count_moments(params, t):
    """Oracle: joint moment ODEs for (E[lam], E[lam^2], E[N], E[N lam], E[N^2])."""
    a, xi, b = params.alpha, params.xi, params.beta

    def rhs(_, y):
        m1, m2, u, w, q = y
        return [
            xi * (a - m1) + b * m1,
            2 * xi * a * m1 + b * b * m1 - 2 * (xi - b) * m2,
            m1,
            xi * a * u - (xi - b) * w + m2 + b * m1,
            2 * w + m1,
        ]

    y0 = [params.lambda0, params.lambda0**2, 0.0, 0.0, 0.0]
    sol = solve_ivp(rhs, (0, t), y0, method="Radau", rtol=1e-12, atol=1e-12)
    m1, m2, u, w, q = sol.y[:, -1]
    return u, q - u * u


stable_params = st.builds(
    HawkesParams,
    alpha=st.floats(1.0, 80.0),
    lambda0=st.floats(1.0, 80.0),
    xi=st.floats(2.0, 40.0),
    beta=st.floats(0.0, 1.0),
).map(lambda p: HawkesParams(p.alpha, p.lambda0, p.xi, p.beta * 0.9 * p.xi))


class TestParams:
    def test_standard_values(self):
        assert STD.stationary_mean == pytest.approx(67.5)
        assert STD.reversion_rate == 6.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(alpha=0.0, lambda0=27, xi=15, beta=9),
            dict(alpha=27, lambda0=-1, xi=15, beta=9),
            dict(alpha=27, lambda0=27, xi=0, beta=0),
            dict(alpha=27, lambda0=27, xi=15, beta=-0.1),
            dict(alpha=27, lambda0=27, xi=15, beta=float("nan")),
        ],
    )
    def test_invalid_construction(self, kwargs):
        with pytest.raises(ValueError):
            HawkesParams(**kwargs)

    def test_supercritical_rejected(self):
        with pytest.raises(StabilityError):
            HawkesParams(27, 27, 15, 15)
        with pytest.raises(StabilityError):
            HawkesParams(27, 27, 15, 20)


class TestMoments:
    def test_intensity_at_zero_is_lambda0(self):
        assert expected_intensity(STD, 0.0) == pytest.approx(27.0)

    def test_intensity_long_run(self):
        assert expected_intensity(STD, 50.0) == pytest.approx(67.5)

    def test_intensity_at_one(self):
        # 67.5 - 40.5 e^{-6}
        assert expected_intensity(STD, 1.0) == pytest.approx(67.39961053684502, rel=1e-12)

    def test_count_at_zero(self):
        assert expected_count(STD, 0.0) == 0.0

    def test_count_quadrature_oracle(self):
        val, err = quad(lambda s: expected_intensity(STD, s), 0.0, 1.0, epsabs=1e-12)
        assert expected_count(STD, 1.0) == pytest.approx(val, abs=1e-9)
        assert expected_count(STD, 1.0) == pytest.approx(60.7667315771925, rel=1e-12)

    def test_poisson_limit_count(self):
        p = HawkesParams(27, 27, 15, 0)
        assert expected_count(p, 0.7) == pytest.approx(27 * 0.7, rel=1e-14)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            expected_intensity(STD, -0.1)
        with pytest.raises(ValueError):
            expected_count(STD, -1.0)

    @settings(max_examples=30, deadline=None)
    @given(stable_params, st.floats(0.01, 3.0), st.floats(0.01, 2.0))
    def test_count_nondecreasing_in_t(self, p, t, dt):
        assert expected_count(p, t + dt) >= expected_count(p, t) - 1e-9

    @settings(max_examples=30, deadline=None)
    @given(stable_params, st.floats(0.1, 2.0))
    def test_count_nondecreasing_in_beta(self, p, t):
        bigger = HawkesParams(p.alpha, p.lambda0, p.xi, min(p.beta + 0.05 * p.xi, 0.95 * p.xi))
        assert expected_count(bigger, t) >= expected_count(p, t) - 1e-9


class TestIntensityVariance:
    def test_zero_cases(self):
        assert intensity_variance(STD, 0.0) == 0.0
        assert intensity_variance(HawkesParams(27, 27, 15, 0), 1.0) == 0.0

    def test_lambda_max_heuristic_standard(self):
        assert lambda_max_heuristic(STD, 1.0) == pytest.approx(216.0, abs=5.0)

    def test_lambda_max_poisson_limit(self):
        p = HawkesParams(27, 27, 15, 0)
        assert lambda_max_heuristic(p, 1.0) == expected_intensity(p, 1.0)

    def test_faster_decay_shrinks_bound(self):
        fast = HawkesParams(27, 27, 50, 9)
        assert lambda_max_heuristic(fast, 1.0) < lambda_max_heuristic(STD, 1.0)

    def test_variance_nonnegative(self):
        for t in (0.1, 0.5, 2.0):
            assert intensity_variance(STD, t) >= 0.0


class TestCountVariance:
    def test_validation(self):
        with pytest.raises(ValueError):
            count_variance(STD, 1.0, mc_paths=100)
        assert count_variance(STD, 0.0).value == 0.0

    def test_poisson_limit(self):
        p = HawkesParams(27, 27, 15, 0)
        est = count_variance(p, 1.0, mc_paths=40_000, seed=3)
        assert abs(est.value - 27.0) <= 3 * est.stderr + 0.5

    def test_against_moment_ode_oracle(self):
        est = count_variance(STD, 1.0, mc_paths=100_000, seed=1)
        _, var_exact = exact_count_moments(STD, 1.0)
        assert var_exact == pytest.approx(309.0, abs=0.5)
        assert abs(est.value - var_exact) <= 4 * est.stderr


class TestSimulatePath:
    def test_horizon_validation(self):
        with pytest.raises(ValueError):
            simulate_path(STD, float("inf"), 0)
        with pytest.raises(ValueError):
            simulate_path(STD, 0.0, 0)

    def test_deterministic_given_seed(self):
        a = simulate_path(STD, 1.0, seed=42)
        b = simulate_path(STD, 1.0, seed=42)
        assert np.array_equal(a.event_times, b.event_times)

    def test_event_times_in_range(self):
        p = simulate_path(STD, 1.0, seed=7)
        assert np.all(np.diff(p.event_times) > 0)
        assert p.event_times[0] > 0 and p.event_times[-1] <= 1.0

    def test_intensity_matches_closed_form_at_events(self):
        path, trace = simulate_path(STD, 1.0, seed=11, return_trace=True)
        accepted = trace.candidate_times[trace.accepted]
        # sampler's running intensity equals the kernel sum at machine precision
        recomputed = path.intensity(accepted, before=True)
        np.testing.assert_allclose(trace.intensities[trace.accepted], recomputed, rtol=1e-10)

    def test_thinning_bound_dominates(self):
        for seed in range(5):
            _, trace = simulate_path(STD, 1.0, seed=seed, return_trace=True)
            assert np.all(trace.intensities <= trace.bounds + 1e-12)

    def test_intensity_floor_when_started_at_mean(self):
        path = simulate_path(STD, 1.0, seed=3)
        ts = np.linspace(0, 1, 101)
        assert np.all(path.intensity(ts) >= STD.lambda0 - 1e-12)

    def test_tiny_horizon_mostly_empty(self):
        counts = [simulate_path(STD, 1e-6, seed=s).n_events for s in range(200)]
        assert np.mean(counts) < 0.01


class TestSimulatePaths:
    def test_mean_count_standard(self):
        batch = simulate_paths(STD, 1.0, 30_000, seed=5)
        c = batch.counts()
        se = c.std(ddof=1) / math.sqrt(c.size)
        assert abs(c.mean() - expected_count(STD, 1.0)) <= 4 * se

    @pytest.mark.parametrize("seed", [101, 202, 303, 404, 505])
    def test_mean_count_random_stable_draws(self, seed):
        rng = np.random.default_rng(seed)
        alpha = rng.uniform(5, 60)
        lam0 = rng.uniform(5, 60)
        xi = rng.uniform(3, 30)
        beta = rng.uniform(0, 0.8) * xi
        p = HawkesParams(alpha, lam0, xi, beta)
        batch = simulate_paths(p, 1.0, 30_000, seed=seed)
        c = batch.counts()
        se = max(c.std(ddof=1) / math.sqrt(c.size), 1e-9)
        assert abs(c.mean() - expected_count(p, 1.0)) <= 4 * se

    def test_thread_count_invariance(self):
        a = simulate_paths(STD, 1.0, 6000, seed=9, threads=1)
        b = simulate_paths(STD, 1.0, 6000, seed=9, threads=2)
        assert np.array_equal(a.offsets, b.offsets)
        assert np.array_equal(a.times, b.times)

    def test_batch_paths_match_closed_form_intensity(self):
        batch = simulate_paths(STD, 1.0, 50, seed=2)
        grid = np.linspace(0.0, 1.0, 41)
        lam = batch.intensity_on_grid(grid)
        for i in (0, 7, 23):
            np.testing.assert_allclose(lam[i], batch.path(i).intensity(grid), rtol=1e-9, atol=1e-9)

    def test_terminal_intensity_matches(self):
        batch = simulate_paths(STD, 1.0, 20, seed=4)
        lt = batch.terminal_intensity()
        for i in range(20):
            assert lt[i] == pytest.approx(batch.path(i).intensity(1.0), rel=1e-10)
