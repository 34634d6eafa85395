import math

import mpmath
import numpy as np
import pytest

from sapdplus import datasets
from sapdplus.errors import ConfigurationError, DivergenceError
from sapdplus.params import theorem1_schedule
from sapdplus.problem import NoiseLevels, shifted_subproblem, with_gaussian_noise
from sapdplus.sapd import SapdParams, sapd_run, weighted_average


def scsc_toy():
    """L(x,y) = x^2/2 + x y - y^2/2 as the mu_x = 1 shift of Phi = -x^2/2 + x y."""
    qs = datasets.make_scsc_quadratic([[-1.0]], [[1.0]], mu_y=1.0, gamma=1.0)
    sub = shifted_subproblem(qs.problem, np.zeros(1), 1.0)
    return qs, sub


class TestWeightedAverage:
    def test_rho_one_is_mean(self):
        rng = np.random.default_rng(0)
        zs = rng.standard_normal((7, 3))
        np.testing.assert_allclose(weighted_average(zs, 1.0), zs.mean(axis=0),
                                   atol=1e-14)

    def test_two_iterates(self):
        z1, z2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        got = weighted_average([z1, z2], 0.5)
        np.testing.assert_allclose(got, (z1 + 2 * z2) / 3.0, atol=1e-15)

    def test_long_run_against_high_precision(self):
        rng = np.random.default_rng(1)
        zs = rng.standard_normal(200)
        rho = 0.9
        got = weighted_average(zs.reshape(-1, 1), rho)[0]
        with mpmath.workdps(50):
            r = mpmath.mpf("0.9")
            num = mpmath.fsum(r ** (-k) * mpmath.mpf(float(zs[k])) for k in range(200))
            den = mpmath.fsum(r ** (-k) for k in range(200))
            ref = float(num / den)
        assert math.isfinite(got)
        assert abs(got - ref) < 1e-10

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError):
            weighted_average([], 0.5)


class TestSapdRun:
    def test_theta_zero_single_iteration_is_gda(self):
        qs, sub = scsc_toy()
        params = SapdParams(tau=0.2, sigma=0.3, theta=0.0, rho=1.0, alpha=0.0,
                            mu_x=1.0, n_inner=1)
        x0, y0 = np.array([1.0]), np.array([-0.5])
        res = sapd_run(sub, params, x0, y0, rng=None)
        y1 = y0 + 0.3 * sub.grad_y(x0, y0)
        x1 = x0 - 0.2 * sub.grad_x(x0, y1)
        np.testing.assert_allclose(res.y_last, y1, atol=1e-15)
        np.testing.assert_allclose(res.x_last, x1, atol=1e-15)

    def test_single_iteration_average(self):
        qs, sub = scsc_toy()
        params = SapdParams(tau=0.2, sigma=0.3, theta=0.5, rho=0.5, alpha=0.0,
                            mu_x=1.0, n_inner=1)
        res = sapd_run(sub, params, np.array([1.0]), np.array([1.0]), rng=None)
        np.testing.assert_array_equal(res.x_avg, res.x_last)
        np.testing.assert_array_equal(res.y_avg, res.y_last)

    def test_toy_contracts_with_schedule(self):
        qs, sub = scsc_toy()
        sched = theorem1_schedule(qs.problem.smoothness, qs.problem.convexity,
                                  NoiseLevels(0, 0), 0.1, 1.0)
        z0 = np.array([1.0]), np.array([2.0])
        res = sapd_run(sub, sched.sapd_params(), *z0, rng=None)
        d0 = math.hypot(1.0, 2.0)
        d1 = math.hypot(float(res.x_avg[0]), float(res.y_avg[0]))
        assert d1 < d0  # saddle of the shifted toy is the origin

    def test_oracle_accounting(self):
        qs, sub = scsc_toy()
        params = SapdParams(tau=0.1, sigma=0.1, theta=0.8, rho=0.8, alpha=0.0,
                            mu_x=1.0, n_inner=13)
        res = sapd_run(sub, params, np.ones(1), np.ones(1), rng=None)
        assert res.x_calls == 13
        assert res.y_calls == 14
        assert res.oracle_calls == 2 * 13 + 1

    def test_seed_determinism(self):
        qs, sub = scsc_toy()
        noisy = with_gaussian_noise(sub, 0.3, 0.3)
        params = SapdParams(tau=0.05, sigma=0.05, theta=0.8, rho=0.8, alpha=0.0,
                            mu_x=1.0, n_inner=40)
        runs = []
        for _ in range(2):
            rng = np.random.default_rng(42)
            res = sapd_run(noisy, params, np.ones(1), np.ones(1), rng,
                           record_iterates=True)
            runs.append(res)
        for (xa, ya), (xb, yb) in zip(runs[0].trace, runs[1].trace):
            np.testing.assert_array_equal(xa, xb)
            np.testing.assert_array_equal(ya, yb)

    def test_divergence_guard(self):
        qs, sub = scsc_toy()
        params = SapdParams(tau=50.0, sigma=50.0, theta=1.0, rho=1.0, alpha=0.0,
                            mu_x=1.0, n_inner=500)
        with pytest.raises(DivergenceError) as err:
            sapd_run(sub, params, np.array([1.0]), np.array([1.0]), rng=None)
        assert err.value.iteration is not None

    def test_deterministic_contraction_random_instances(self):
        # monotone decrease of last-iterate distance after a short burn-in,
        # and averaged output no worse than the start
        for seed in range(8):
            rng = np.random.default_rng(seed)
            qs = datasets.make_quadratic_saddle(6, 5, 1.0, 1.0, rng)
            sched = theorem1_schedule(qs.problem.smoothness, qs.problem.convexity,
                                      NoiseLevels(0, 0), 0.1, 1.0)
            center = rng.standard_normal(6)
            sub = shifted_subproblem(qs.problem, center, sched.mu_x)
            xs, ys = qs.shifted_saddle(center, sched.mu_x)
            x0 = center + rng.standard_normal(6)
            y0 = rng.standard_normal(5)
            res = sapd_run(sub, sched.sapd_params(), x0, y0, rng=None,
                           record_iterates=True)
            dists = [math.sqrt(np.sum((x - xs) ** 2) + np.sum((y - ys) ** 2))
                     for x, y in res.trace]
            burn = 5
            assert all(dists[k + 1] <= dists[k] * (1 + 1e-9)
                       for k in range(burn, len(dists) - 1))
            d_start = math.sqrt(np.sum((x0 - xs) ** 2) + np.sum((y0 - ys) ** 2))
            d_avg = math.sqrt(np.sum((res.x_avg - xs) ** 2)
                              + np.sum((res.y_avg - ys) ** 2))
            assert d_avg <= d_start

    def test_step_tol_early_exit(self):
        qs, sub = scsc_toy()
        params = SapdParams(tau=0.2, sigma=0.2, theta=0.75, rho=0.75, alpha=0.0,
                            mu_x=1.0, n_inner=10_000)
        res = sapd_run(sub, params, np.ones(1), np.ones(1), rng=None,
                       step_tol=1e-12)
        assert res.iterations < 10_000
        assert res.last_step_norm <= 1e-12
