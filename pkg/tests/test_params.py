import math

import numpy as np
import pytest

from sapdplus.errors import ConfigurationError, InfeasibleScheduleError
from sapdplus.params import (PSD_TOL, beta_of, build_lmi, build_lmi_sign_flipped,
                             build_vr_lmi, check_sufficient_conditions,
                             inner_iterations, theorem1_schedule, theta_bar,
                             theta_bar_components, theta_noise_floor,
                             vr_batch_floor, vr_default_batches, vr_schedule)
from sapdplus.problem import ConvexityModuli, NoiseLevels, SmoothnessConstants

CANON_S = SmoothnessConstants(1.0, 1.0, 1.0, 1.0)
CANON_C = ConvexityModuli(1.0, 1.0)


def theta_bar_1_oracle(beta, s, c, mu_x):
    """Independent root computation: smallest theta with
    l_yx^2 (1-theta)^2 + beta mu_y l'_xx (1-theta) - beta mu_y mu_x <= 0."""
    lp = s.l_xx + mu_x + c.gamma
    a, b_, c_ = s.l_yx**2, beta * c.mu_y * lp, -beta * c.mu_y * mu_x
    u = (-b_ + math.sqrt(b_**2 - 4 * a * c_)) / (2 * a)
    return 1.0 - u


def theta_bar_2_oracle(beta, s, c):
    """Smallest theta with (2 l_yy / mu_y) (1-theta)/sqrt(theta) <= 1 - beta."""
    if s.l_yy == 0:
        return 0.0
    root = (-(1 - beta) * c.mu_y
            + math.sqrt((1 - beta) ** 2 * c.mu_y**2 + 16 * s.l_yy**2)) / (4 * s.l_yy)
    return root**2


def random_tuple(rng):
    s = SmoothnessConstants(*(10 ** rng.uniform(-1, 1, 4)))
    c = ConvexityModuli(10 ** rng.uniform(-1, 1), 10 ** rng.uniform(-2, 1))
    return s, c


class TestBeta:
    def test_canonical(self):
        assert beta_of(CANON_S, CANON_C) == 0.25

    def test_mu_dominant(self):
        # mu_y = 4 gamma and l_yx >= 2 l_xy: gamma/(4 mu_y) = 1/16 wins
        s = SmoothnessConstants(1.0, 1.0, 2.0, 1.0)
        c = ConvexityModuli(1.0, 4.0)
        assert beta_of(s, c) == 1.0 / 16.0

    def test_coupling_dominant(self):
        s = SmoothnessConstants(1.0, 100.0, 1.0, 1.0)
        assert beta_of(s, CANON_C) == 1.0 / 200.0

    def test_merely_concave_rejected(self):
        with pytest.raises(ConfigurationError):
            beta_of(CANON_S, ConvexityModuli(1.0, 0.0))


class TestThetaBar:
    def test_canonical_tb1(self):
        tb1, tb2 = theta_bar_components(0.25, CANON_S, CANON_C, mu_x=1.0)
        assert abs(tb1 - 0.75) < 1e-12
        assert abs(tb1 - theta_bar_1_oracle(0.25, CANON_S, CANON_C, 1.0)) < 1e-12

    def test_canonical_tb2(self):
        _, tb2 = theta_bar_components(0.25, CANON_S, CANON_C, mu_x=1.0)
        oracle = theta_bar_2_oracle(0.25, CANON_S, CANON_C)
        assert abs(tb2 - oracle) < 1e-12
        assert abs(tb2 - 0.6888) < 5e-4  # hand evaluation of the printed form
        assert theta_bar(0.25, CANON_S, CANON_C, 1.0) == max(0.75, tb2)

    def test_lyy_zero(self):
        s = SmoothnessConstants(1.0, 1.0, 1.0, 0.0)
        _, tb2 = theta_bar_components(0.25, s, CANON_C, mu_x=1.0)
        assert tb2 == 0.0

    def test_oracle_agreement_random(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            s, c = random_tuple(rng)
            mu_x = c.gamma
            beta = beta_of(s, c)
            tb1, tb2 = theta_bar_components(beta, s, c, mu_x)
            assert abs(tb1 - theta_bar_1_oracle(beta, s, c, mu_x)) < 1e-10
            assert abs(tb2 - theta_bar_2_oracle(beta, s, c)) < 1e-10


class TestNoiseFloor:
    def test_deterministic(self):
        assert theta_noise_floor(CANON_C, NoiseLevels(0, 0), 0.1) == (0.0, 0.0)

    def test_boundary(self):
        # eps^2/delta_x^2 = 384 makes the first floor exactly 0
        delta = 0.1 / math.sqrt(384)
        td1, _ = theta_noise_floor(CANON_C, NoiseLevels(delta, 0), 0.1)
        assert abs(td1) < 1e-12

    def test_half(self):
        # gamma = mu_y and eps^2/delta_y^2 = 3840: floor (1 + 1)^{-1} = 0.5
        delta_y = 0.1 / math.sqrt(3840)
        _, td2 = theta_noise_floor(CANON_C, NoiseLevels(0, delta_y), 0.1)
        assert abs(td2 - 0.5) < 1e-12

    def test_bad_epsilon(self):
        with pytest.raises(ConfigurationError):
            theta_noise_floor(CANON_C, NoiseLevels(0, 0), 0.0)


class TestTheorem1Schedule:
    def test_canonical(self):
        sched = theorem1_schedule(CANON_S, CANON_C, NoiseLevels(0, 0), 0.1, 1.0)
        assert abs(sched.theta - 0.75) < 1e-12
        assert abs(sched.tau - 0.25) < 1e-12
        assert abs(sched.sigma - 1.0 / 3.0) < 1e-12
        assert sched.n_inner == 21  # ceil(ln 265 / ln(4/3)) + 1
        assert abs(sched.alpha - (3.0 - math.sqrt(0.75))) < 1e-12
        assert sched.certificate.feasible

    def test_t_outer_arithmetic(self):
        sched = theorem1_schedule(CANON_S, CANON_C, NoiseLevels(0, 0), 0.1, 1.0)
        assert sched.t_outer == 9601

    def test_noise_dominant_still_feasible(self):
        # delta large enough that the second noise floor dominates
        sched = theorem1_schedule(CANON_S, CANON_C, NoiseLevels(0.0, 5.0), 0.1, 1.0)
        assert sched.theta == sched.theta_dbar_2
        assert sched.theta > sched.theta_bar_1
        assert sched.certificate.feasible

    def test_n_rule(self):
        assert inner_iterations(0.75) == 21
        assert inner_iterations(0.9) == math.ceil(math.log(265) / math.log(1 / 0.9)) + 1


class TestSufficientConditions:
    def exact_pis(self, theta, s, c):
        sigma = (1 - theta) / (c.mu_y * theta)
        pi2 = math.sqrt(theta)
        denom = 1.0 - sigma * (pi2 + theta / pi2) * s.l_yy
        pi1 = sigma * theta * s.l_yx / denom
        return pi1, pi2

    def test_schedule_passes(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            s, c = random_tuple(rng)
            sched = theorem1_schedule(s, c, NoiseLevels(0, 0), 0.1, 1.0)
            pi1, pi2 = self.exact_pis(sched.theta, s, c)
            assert pi1 > 0
            assert check_sufficient_conditions(sched.tau, sched.sigma, sched.theta,
                                               pi1, pi2, s, c, sched.mu_x)

    def test_tau_doubled_fails(self):
        sched = theorem1_schedule(CANON_S, CANON_C, NoiseLevels(0, 0), 0.1, 1.0)
        pi1, pi2 = self.exact_pis(sched.theta, CANON_S, CANON_C)
        lp = CANON_S.l_xx + sched.mu_x + CANON_C.gamma
        bad_tau = 2.0 / (lp + pi1 * CANON_S.l_yx)
        assert not check_sufficient_conditions(bad_tau, sched.sigma, sched.theta,
                                               pi1, pi2, CANON_S, CANON_C, sched.mu_x)

    def test_theta_near_one(self):
        theta = 1.0 - 1e-9
        tau = 0.2
        sigma = 0.2
        # first two inequalities are trivial near theta = 1
        assert tau >= (1 - theta) / 1.0 and sigma >= (1 - theta) / (1.0 * theta)


class TestLmi:
    def test_schedule_sweep_feasible(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            s, c = random_tuple(rng)
            sched = theorem1_schedule(s, c, NoiseLevels(0, 0), 0.1, 1.0)
            assert sched.certificate.min_eigenvalue >= -PSD_TOL

    def test_alpha_boundary_rejected(self):
        with pytest.raises(ConfigurationError):
            build_lmi(0.25, 1 / 3, 0.75, 0.75, 3.0, 1.0, CANON_S, CANON_C)

    def test_sign_flipped_agreement(self):
        rng = np.random.default_rng(3)
        agree = 0
        for _ in range(200):
            s, c = random_tuple(rng)
            tau, sigma = 10 ** rng.uniform(-2, 0.5, 2)
            theta = rng.uniform(0.05, 1.0)
            rho = rng.uniform(max(0.05, theta - 0.3), 1.0)
            alpha = rng.uniform(0, 1) / sigma
            mu_x = 10 ** rng.uniform(-1, 1)
            g = build_lmi(tau, sigma, theta, rho, alpha, mu_x, s, c)
            gp = build_lmi_sign_flipped(tau, sigma, theta, rho, alpha, mu_x, s, c)
            assert g.feasible == gp.feasible
            agree += g.feasible
        assert 0 < agree < 200  # both outcomes exercised

    def test_theta_monotonicity(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            s, c = random_tuple(rng)
            sched = theorem1_schedule(s, c, NoiseLevels(0, 0), 0.1, 1.0)
            for bump in (0.2, 0.5, 0.9):
                theta = sched.theta + bump * (1.0 - sched.theta)
                tau = (1 - theta) / c.gamma
                sigma = (1 - theta) / (c.mu_y * theta)
                alpha = 1 / sigma - math.sqrt(theta) * s.l_yy
                cert = build_lmi(tau, sigma, theta, theta, alpha, sched.mu_x, s, c)
                assert cert.feasible

    def test_bisection_matches_closed_form(self):
        # smallest feasible theta under the pi-substitution (pi1 = sigma theta
        # l_yx / beta, pi2 = sqrt(theta)) equals max(theta_bar_1, theta_bar_2)
        rng = np.random.default_rng(5)
        for _ in range(200):
            s, c = random_tuple(rng)
            mu_x = c.gamma
            beta = beta_of(s, c)
            tb1, tb2 = theta_bar_components(beta, s, c, mu_x)
            target = max(tb1, tb2)

            def feasible(theta):
                tau = (1 - theta) / mu_x
                sigma = (1 - theta) / (c.mu_y * theta)
                pi1 = sigma * theta * s.l_yx / beta
                return check_sufficient_conditions(tau, sigma, theta, pi1,
                                                   math.sqrt(theta), s, c, mu_x)

            lo, hi = 1e-9, 1.0 - 1e-12
            assert feasible(hi)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if feasible(mid):
                    hi = mid
                else:
                    lo = mid
            assert abs(hi - target) < 1e-6


class TestVrSchedule:
    def test_q1_formulas(self):
        params, cert, t_outer = vr_schedule(CANON_S, CANON_C, NoiseLevels(0, 0),
                                            0.1, 1.0, q=1, b_x=4, b_y=4)
        lp = 1.0 + 2.0  # l_xx + 2 gamma
        assert abs(params.tau - 1.0 / (1.0 + lp)) < 1e-12
        assert abs(params.sigma - 1.0 / (2.0 + 1.0)) < 1e-12
        assert cert.feasible

    def test_deterministic_batch_floor(self):
        assert vr_batch_floor(NoiseLevels(0, 0), CANON_C, 0.1) == 1

    def test_batch_floor_formula(self):
        nz = NoiseLevels(0.5, 0.2)
        c = ConvexityModuli(2.0, 0.5)
        expected = math.ceil(max(144 * 0.25, 360 * 0.04 * 4.0) / 0.01)
        assert vr_batch_floor(nz, c, 0.1) == expected

    def test_tuning_rule(self):
        q, b_small = vr_default_batches(3600, 4.0)
        assert q == 30 and b_small == 120

    def test_outer_count(self):
        _, _, t_outer = vr_schedule(CANON_S, CANON_C, NoiseLevels(0, 0),
                                    0.1, 1.0, q=2, b_x=4, b_y=4)
        assert t_outer == math.ceil(288 * 1.0 * 1.0 / 0.01)

    def test_sweep_feasible(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            s, c = random_tuple(rng)
            q = int(rng.integers(1, 20))
            params, cert, _ = vr_schedule(s, c, NoiseLevels(0, 1.0), 0.1, 1.0,
                                          q=q, b_x=int(rng.integers(1, 16)),
                                          b_y=int(rng.integers(1, 16)))
            assert cert.min_eigenvalue >= -PSD_TOL
            assert params.b >= 1

    def test_vr_lmi_rejects_bad_rho(self):
        with pytest.raises(ConfigurationError):
            build_vr_lmi(0.1, 0.1, 2, 4, 4, 1.0, CANON_S, CANON_C, rho=1.5)
