"""Theory-driven step-size selection and 5x5 matrix-inequality certification.

The admissible (tau, sigma, theta, rho, alpha) tuples for the inner solver
are exactly those making a 5x5 matrix G positive semidefinite; the
variance-reduced variant subtracts a diagonal correction.  This module
builds those matrices, certifies tuples, and evaluates the closed-form
parameter rules (momentum lower bounds, step sizes, inner/outer iteration
counts, batch sizes).
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, InfeasibleScheduleError
from .problem import ConvexityModuli, NoiseLevels, SmoothnessConstants

PSD_TOL = 1e-9


@dataclass(frozen=True)
class LmiCertificate:
    """Feasibility record for one parameter tuple.

    matrix is G (or G - diag(g) in the VR case) symmetrized; feasible means
    min_eigenvalue >= -PSD_TOL.
    """

    matrix: np.ndarray
    min_eigenvalue: float
    feasible: bool
    tau: float
    sigma: float
    theta: float
    rho: float
    alpha: float
    variance_reduced: bool = False

    def __bool__(self):
        return self.feasible


def _min_eig(mat):
    sym = 0.5 * (mat + mat.T)
    return float(np.linalg.eigvalsh(sym)[0])


def _assemble_g(tau, sigma, theta, rho, alpha, mu_x, s: SmoothnessConstants, mu_y, sign_flipped=False):
    lbar_xx_gap = 1.0 / tau - s.l_xx  # caller passes l_xx already including mu_x + gamma
    off = abs(1.0 - theta / rho) if sign_flipped else (theta / rho - 1.0)
    c = -abs(1.0 - theta / rho) if sign_flipped else (theta / rho - 1.0)
    g = np.zeros((5, 5))
    g[0, 0] = (1.0 / tau) * (1.0 - 1.0 / rho) + mu_x / rho
    g[1, 1] = (1.0 / sigma) * (1.0 - 1.0 / rho) + mu_y
    g[1, 2] = g[2, 1] = c * s.l_yx
    g[1, 3] = g[3, 1] = c * s.l_yy
    g[2, 2] = lbar_xx_gap
    g[3, 3] = 1.0 / sigma - alpha
    g[2, 4] = g[4, 2] = -(theta / rho) * s.l_yx
    g[3, 4] = g[4, 3] = -(theta / rho) * s.l_yy
    g[4, 4] = alpha / rho
    return g


def build_lmi(tau, sigma, theta, rho, alpha, mu_x,
              smoothness: SmoothnessConstants, convexity: ConvexityModuli) -> LmiCertificate:
    """Assemble the 5x5 matrix G for the inner solver and report feasibility.

    Entries follow the printed matrix with bar(L)_xx = l_xx + mu_x + gamma.
    The equivalent sign-flipped form (off-diagonal couplings replaced by
    -|1 - theta/rho|) is checked as an internal cross-check: both forms are
    PSD together or not at all.
    """
    if tau <= 0 or sigma <= 0:
        raise ConfigurationError("tau, sigma must be positive")
    if not (0 < rho <= 1):
        raise ConfigurationError("rho must lie in (0, 1]")
    if theta < 0:
        raise ConfigurationError("theta must be nonnegative")
    if not (0 <= alpha < 1.0 / sigma):
        raise ConfigurationError("alpha must lie in [0, 1/sigma)")
    s_shift = SmoothnessConstants(
        smoothness.l_xx + mu_x + convexity.gamma,
        smoothness.l_xy, smoothness.l_yx, smoothness.l_yy,
    )
    g = _assemble_g(tau, sigma, theta, rho, alpha, mu_x, s_shift, convexity.mu_y)
    min_eig = _min_eig(g)
    return LmiCertificate(
        matrix=g, min_eigenvalue=min_eig, feasible=min_eig >= -PSD_TOL,
        tau=tau, sigma=sigma, theta=theta, rho=rho, alpha=alpha,
    )


def build_lmi_sign_flipped(tau, sigma, theta, rho, alpha, mu_x,
                           smoothness: SmoothnessConstants, convexity: ConvexityModuli) -> LmiCertificate:
    """The G' form with -|1 - theta/rho| couplings; PSD iff G is PSD."""
    s_shift = SmoothnessConstants(
        smoothness.l_xx + mu_x + convexity.gamma,
        smoothness.l_xy, smoothness.l_yx, smoothness.l_yy,
    )
    g = _assemble_g(tau, sigma, theta, rho, alpha, mu_x, s_shift, convexity.mu_y,
                    sign_flipped=True)
    min_eig = _min_eig(g)
    return LmiCertificate(
        matrix=g, min_eigenvalue=min_eig, feasible=min_eig >= -PSD_TOL,
        tau=tau, sigma=sigma, theta=theta, rho=rho, alpha=alpha,
    )


def build_vr_lmi(tau, sigma, q, b_x, b_y, mu_x,
                 smoothness: SmoothnessConstants, convexity: ConvexityModuli,
                 theta=1.0, rho=1.0, pi_x=None, pi_y=None, alpha=None) -> LmiCertificate:
    """G - diag(g) >= 0 certificate for the variance-reduced inner solver.

    g = [pi_x, pi_y, L'_x, L'_y, 0] with
      L'_x = c(rho) * (l'_xx^2/(pi_x b_x) + 2(1+2 theta+2 theta^2) l_yx^2/(rho pi_y b_y)),
      L'_y = c(rho) * (rho l_xy^2/(pi_x b_x) + 2(1+2 theta+2 theta^2) l_yy^2/(rho pi_y b_y)),
    c(rho) = 2(rho^{1-q} - 1)/(1-rho) for rho < 1 and 2(q-1) at rho = 1.
    Defaults pi_x = mu_x, pi_y = mu_y, alpha = l_yx + l_yy (the published
    choice; it may sit on the alpha = 1/sigma boundary when l_yy = 0, which
    is admissible here).
    """
    if tau <= 0 or sigma <= 0:
        raise ConfigurationError("tau, sigma must be positive")
    if not (0 < rho <= 1):
        raise ConfigurationError("rho must lie in (0, 1]")
    if q < 1 or b_x < 1 or b_y < 1:
        raise ConfigurationError("q, b_x, b_y must be >= 1")
    mu_y = convexity.mu_y
    pi_x = mu_x if pi_x is None else pi_x
    pi_y = mu_y if pi_y is None else pi_y
    if pi_x <= 0 or pi_y <= 0:
        raise ConfigurationError("pi_x, pi_y must be positive")
    s = smoothness
    if alpha is None:
        alpha = s.l_yx + s.l_yy
    if not (0 <= alpha <= 1.0 / sigma + 1e-12):
        raise ConfigurationError("alpha must lie in [0, 1/sigma]")
    lp_xx = s.l_xx + mu_x + convexity.gamma
    if rho == 1.0:
        c_rho = 2.0 * (q - 1)
    else:
        c_rho = 2.0 * (rho ** (1 - q) - 1.0) / (1.0 - rho)
    mom = 2.0 * (1.0 + 2.0 * theta + 2.0 * theta**2) / rho
    lx_corr = c_rho * (lp_xx**2 / (pi_x * b_x) + mom * s.l_yx**2 / (pi_y * b_y))
    ly_corr = c_rho * (rho * s.l_xy**2 / (pi_x * b_x) + mom * s.l_yy**2 / (pi_y * b_y))

    s_shift = SmoothnessConstants(lp_xx, s.l_xy, s.l_yx, s.l_yy)
    g = _assemble_g(tau, sigma, theta, rho, alpha, mu_x, s_shift, mu_y)
    g -= np.diag([pi_x, pi_y, lx_corr, ly_corr, 0.0])
    min_eig = _min_eig(g)
    return LmiCertificate(
        matrix=g, min_eigenvalue=min_eig, feasible=min_eig >= -PSD_TOL,
        tau=tau, sigma=sigma, theta=theta, rho=rho, alpha=alpha,
        variance_reduced=True,
    )


def beta_of(smoothness: SmoothnessConstants, convexity: ConvexityModuli) -> float:
    """beta = min{1/2, mu_y/(4 gamma), gamma/(4 mu_y), l_yx/(2 l_xy)}."""
    if convexity.mu_y <= 0:
        raise ConfigurationError(
            "mu_y = 0: merely-concave problems take the smoothing path"
        )
    g, mu = convexity.gamma, convexity.mu_y
    return min(0.5, mu / (4 * g), g / (4 * mu), smoothness.l_yx / (2 * smoothness.l_xy))


def theta_bar_components(beta, smoothness: SmoothnessConstants,
                         convexity: ConvexityModuli, mu_x) -> tuple:
    """(theta_bar_1, theta_bar_2): momentum lower bounds from the step-size rule.

    theta_bar_1 solves l_yx^2 u^2 + beta mu_y l'_xx u - beta mu_y mu_x = 0
    in u = 1 - theta; theta_bar_2 handles the l_yy coupling (0 when l_yy = 0).
    """
    if not (0 < beta <= 1):
        raise ConfigurationError("beta must lie in (0, 1]")
    if mu_x <= 0:
        raise ConfigurationError("mu_x must be positive")
    s, mu_y = smoothness, convexity.mu_y
    lp_xx = s.l_xx + mu_x + convexity.gamma
    tb1 = 1.0 - (beta * mu_y * lp_xx / (2 * s.l_yx**2)) * (
        math.sqrt(1.0 + 4 * s.l_yx**2 * mu_x / (beta * lp_xx**2 * mu_y)) - 1.0
    )
    if s.l_yy == 0:
        tb2 = 0.0
    else:
        r = (1.0 - beta) ** 2 * mu_y**2 / s.l_yy**2
        tb2 = 1.0 - (r / 8.0) * (math.sqrt(1.0 + 16.0 / r) - 1.0)
    return tb1, tb2


def theta_bar(beta, smoothness, convexity, mu_x) -> float:
    tb1, tb2 = theta_bar_components(beta, smoothness, convexity, mu_x)
    return max(tb1, tb2)


def theta_noise_floor(convexity: ConvexityModuli, noise: NoiseLevels, epsilon) -> tuple:
    """Noise-driven momentum floors; both 0 in the deterministic case.

    theta_dbar_1 = max{0, 1 - eps^2/(384 delta_x^2)}
    theta_dbar_2 = (1 + (mu_y/(10 gamma)) eps^2/(384 delta_y^2))^{-1}
    """
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")
    if noise.delta_x == 0:
        td1 = 0.0
    else:
        td1 = max(0.0, 1.0 - epsilon**2 / (384.0 * noise.delta_x**2))
    if noise.delta_y == 0:
        td2 = 0.0
    else:
        td2 = 1.0 / (
            1.0
            + (convexity.mu_y / (10.0 * convexity.gamma))
            * epsilon**2
            / (384.0 * noise.delta_y**2)
        )
    return td1, td2


def check_sufficient_conditions(tau, sigma, theta, pi1, pi2,
                                smoothness: SmoothnessConstants,
                                convexity: ConvexityModuli, mu_x) -> bool:
    """The four-inequality sufficient system for the 5x5 certificate (rho = theta).

    tau >= (1-theta)/mu_x,  sigma >= (1-theta)/(mu_y theta),
    1/tau >= l'_xx + pi1 l_yx,  1/sigma >= theta l_yx/pi1 + (theta/pi2 + pi2) l_yy.

    The published parameter choices satisfy some of these with equality, so
    each comparison carries a relative slack of 1e-12.
    """
    if min(tau, sigma, theta, pi1, pi2, mu_x) <= 0:
        raise ConfigurationError("all arguments must be positive")
    s, mu_y = smoothness, convexity.mu_y
    lp_xx = s.l_xx + mu_x + convexity.gamma

    def geq(lhs, rhs):
        return lhs >= rhs - 1e-12 * max(abs(lhs), abs(rhs), 1.0)

    return (
        geq(tau, (1.0 - theta) / mu_x)
        and geq(sigma, (1.0 - theta) / (mu_y * theta))
        and geq(1.0 / tau, lp_xx + pi1 * s.l_yx)
        and geq(1.0 / sigma, theta * s.l_yx / pi1 + (theta / pi2 + pi2) * s.l_yy)
    )


@dataclass(frozen=True)
class Theorem1Schedule:
    """One certified inner-solver configuration from the closed-form rule."""

    beta: float
    theta_bar_1: float
    theta_bar_2: float
    theta_dbar_1: float
    theta_dbar_2: float
    theta: float
    tau: float
    sigma: float
    alpha: float
    rho: float
    mu_x: float
    n_inner: int
    t_outer: int
    epsilon: float
    gap0: float
    certificate: LmiCertificate

    def sapd_params(self):
        from .sapd import SapdParams

        return SapdParams(
            tau=self.tau, sigma=self.sigma, theta=self.theta, rho=self.rho,
            alpha=self.alpha, mu_x=self.mu_x, n_inner=self.n_inner,
        )


def inner_iterations(theta: float) -> int:
    """N = ceil(ln(265)/ln(1/theta)) + 1 (ceiling keeps N at or above the bound)."""
    if not (0 < theta < 1):
        raise ConfigurationError("theta must lie in (0, 1) for the N rule")
    return math.ceil(math.log(265.0) / math.log(1.0 / theta)) + 1


def theorem1_schedule(smoothness: SmoothnessConstants, convexity: ConvexityModuli,
                      noise: NoiseLevels, epsilon: float, gap0: float) -> Theorem1Schedule:
    """Closed-form certified schedule for the non-VR solver.

    mu_x = gamma; theta = max of the four momentum lower bounds;
    tau = (1-theta)/gamma, sigma = (1-theta)/(mu_y theta);
    alpha = 1/sigma - sqrt(theta) l_yy; rho = theta;
    T = ceil(96 gap0 gamma / eps^2) + 1.
    """
    if gap0 < 0:
        raise ConfigurationError("gap0 must be nonnegative")
    mu_x = convexity.gamma
    beta = beta_of(smoothness, convexity)
    tb1, tb2 = theta_bar_components(beta, smoothness, convexity, mu_x)
    td1, td2 = theta_noise_floor(convexity, noise, epsilon)
    theta = max(tb1, tb2, td1, td2)
    if theta >= 1.0:
        raise InfeasibleScheduleError(
            f"momentum lower bound {theta:.6g} >= 1: degenerate constants"
        )
    theta = min(max(theta, 1e-12), 1.0 - 1e-15)
    tau = (1.0 - theta) / convexity.gamma
    sigma = (1.0 - theta) / (convexity.mu_y * theta)
    # l_yy = 0 puts the closed-form alpha exactly on the alpha = 1/sigma
    # boundary; shave it within the certificate's feasibility margin
    alpha = 1.0 / sigma - math.sqrt(theta) * smoothness.l_yy
    if alpha >= 1.0 / sigma:
        alpha = (1.0 - 1e-9) / sigma
    n_inner = inner_iterations(theta)
    t_outer = math.ceil(96.0 * gap0 * convexity.gamma / epsilon**2) + 1
    cert = build_lmi(tau, sigma, theta, theta, alpha, mu_x, smoothness, convexity)
    if not cert.feasible:
        raise RuntimeError(
            "internal consistency failure: the closed-form schedule must "
            f"certify (min eigenvalue {cert.min_eigenvalue:.3e})"
        )
    return Theorem1Schedule(
        beta=beta, theta_bar_1=tb1, theta_bar_2=tb2, theta_dbar_1=td1,
        theta_dbar_2=td2, theta=theta, tau=tau, sigma=sigma, alpha=alpha,
        rho=theta, mu_x=mu_x, n_inner=n_inner, t_outer=t_outer,
        epsilon=epsilon, gap0=gap0, certificate=cert,
    )


def vr_batch_floor(noise: NoiseLevels, convexity: ConvexityModuli, epsilon: float) -> int:
    """Large-batch rule b >= ceil(max{144 delta_x^2, 360 delta_y^2 gamma/mu_y}/eps^2), at least 1."""
    if convexity.mu_y <= 0:
        raise ConfigurationError("mu_y must be positive for the VR batch rule")
    need = max(
        144.0 * noise.delta_x**2,
        360.0 * noise.delta_y**2 * convexity.gamma / convexity.mu_y,
    ) / epsilon**2
    return max(1, math.ceil(need))


def vr_default_batches(b: int, kappa_y: float) -> tuple:
    """Tuning rule q = sqrt(b/kappa_y), b' = sqrt(b kappa_y) (rounded, floored at 1)."""
    q = max(1, round(math.sqrt(b / kappa_y)))
    b_small = max(1, round(math.sqrt(b * kappa_y)))
    return q, b_small


def vr_schedule(smoothness: SmoothnessConstants, convexity: ConvexityModuli,
                noise: NoiseLevels, epsilon: float, gap0: float,
                q: int, b_x: int, b_y: int, zeta: float = 32.0):
    """Certified variance-reduced schedule (theta = rho = 1).

    tau = (l_yx + l'_xx + 2(q-1)(l'_xx^2/(gamma b_x) + 10 l_yx^2/(mu_y b_y)))^{-1}
    sigma = (2 l_yy + l_yx + 2(q-1)(l_xy^2/(gamma b_x) + 10 l_yy^2/(mu_y b_y)))^{-1}
    N = ceil(2(1+zeta) max{1/(gamma tau) - 1, 1/(mu_y sigma)}),
    T = ceil(288 gap0 gamma/eps^2), b from the batch floor.
    Returns (VrParams, LmiCertificate, t_outer).
    """
    from .vr import VrParams

    if convexity.mu_y <= 0:
        raise ConfigurationError("mu_y must be positive for the VR schedule")
    if q < 1 or b_x < 1 or b_y < 1:
        raise ConfigurationError("q, b_x, b_y must be >= 1")
    if zeta <= 0:
        raise ConfigurationError("zeta must be positive")
    s, gamma, mu_y = smoothness, convexity.gamma, convexity.mu_y
    mu_x = gamma
    lp_xx = s.l_xx + 2.0 * gamma
    lx_corr = 2.0 * (q - 1) * (lp_xx**2 / (gamma * b_x) + 10.0 * s.l_yx**2 / (mu_y * b_y))
    ly_corr = 2.0 * (q - 1) * (s.l_xy**2 / (gamma * b_x) + 10.0 * s.l_yy**2 / (mu_y * b_y))
    tau = 1.0 / (s.l_yx + lp_xx + lx_corr)
    sigma = 1.0 / (2.0 * s.l_yy + s.l_yx + ly_corr)
    b = vr_batch_floor(noise, convexity, epsilon)
    n_inner = max(1, math.ceil(2.0 * (1.0 + zeta) * max(1.0 / (gamma * tau) - 1.0,
                                                        1.0 / (mu_y * sigma))))
    t_outer = max(1, math.ceil(288.0 * gap0 * gamma / epsilon**2))
    cert = build_vr_lmi(tau, sigma, q, b_x, b_y, mu_x, smoothness, convexity)
    if not cert.feasible:
        raise RuntimeError(
            "internal consistency failure: the VR schedule must certify "
            f"(min eigenvalue {cert.min_eigenvalue:.3e})"
        )
    params = VrParams(tau=tau, sigma=sigma, b=b, b_x=b_x, b_y=b_y, q=q,
                      n_inner=n_inner, mu_x=mu_x)
    return params, cert, t_outer
