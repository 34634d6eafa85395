"""Stationarity metrics.

The headline metric is the norm of the Moreau-envelope gradient,
||grad phi_lam(x)|| = ||x - prox_{lam phi}(x)|| / lam, with the prox point
approximated by a nested deterministic solve of the quadratically shifted
saddle problem.  Closed-form gaps for quadratic instances live here too.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .params import beta_of, inner_iterations, theta_bar
from .problem import ProblemSpec, shifted_subproblem
from .sapd import SapdParams, sapd_run


@dataclass
class StationarityEstimate:
    lam: float
    prox_point: np.ndarray
    value: float  # ||x - prox|| / lam
    residual: float  # last-iterate step norm of the nested solve
    reliable: bool
    inner_iterations: int

    def __float__(self):
        return self.value


def _scsc_inner_params(p: ProblemSpec, mu_x: float) -> SapdParams:
    """Deterministic inner parameters for the nested prox solve.

    mu_y > 0: the closed-form momentum rule (theta = theta_bar(beta)).
    mu_y = 0: theta = 1 with the periodless variance-reduced step sizes
    tau = 1/(l_yx + l'_xx), sigma = 1/(2 l_yy + l_yx); the dual then leans
    on the coupling alone, which is enough for the prox point since the
    primal part is mu_x-strongly convex.
    """
    s, c = p.smoothness, p.convexity
    lp_xx = s.l_xx + mu_x + c.gamma
    if c.mu_y > 0:
        beta = beta_of(s, c)
        theta = theta_bar(beta, s, c, mu_x)
        theta = min(max(theta, 1e-12), 1.0 - 1e-12)
        tau = (1.0 - theta) / mu_x
        sigma = (1.0 - theta) / (c.mu_y * theta)
        alpha = 1.0 / sigma - math.sqrt(theta) * s.l_yy
        if alpha >= 1.0 / sigma:
            alpha = (1.0 - 1e-9) / sigma
        n_inner = inner_iterations(theta)
        return SapdParams(tau=tau, sigma=sigma, theta=theta, rho=theta,
                          alpha=alpha, mu_x=mu_x, n_inner=n_inner)
    tau = 1.0 / (s.l_yx + lp_xx)
    sigma = 1.0 / (2.0 * s.l_yy + s.l_yx)
    alpha = min(s.l_yx + s.l_yy, (1.0 - 1e-9) / sigma)
    return SapdParams(tau=tau, sigma=sigma, theta=1.0, rho=1.0, alpha=alpha,
                      mu_x=mu_x, n_inner=200)


def moreau_stationarity(p: ProblemSpec, x, lam: Optional[float] = None,
                        tol: float = 1e-8, max_calls: int = 400,
                        y0=None) -> StationarityEstimate:
    """Estimate ||grad phi_lam(x)|| for phi(x) = max_y f(x) + Phi(x,y) - g(y).

    Approximates prox_{lam phi}(x) by solving the shifted saddle problem
    min_w max_y L(w,y) + ||w - x||^2/(2 lam) with deterministic inner solves
    (warm-started, last iterate carried) until the last-iterate step norm
    drops below tol.  Default lam = 1/(2 gamma).  A run that exhausts its
    budget is returned with reliable=False.
    """
    gamma = p.convexity.gamma
    lam = 1.0 / (2.0 * gamma) if lam is None else lam
    if not (0 < lam < 1.0 / gamma):
        raise ConfigurationError("lambda must lie in (0, 1/gamma)")
    x = np.asarray(x, dtype=float)
    mu_x = 1.0 / lam - gamma
    det = p.deterministic()
    sub = shifted_subproblem(det, x, mu_x)
    params = _scsc_inner_params(det, mu_x)

    w = x.copy()
    y = np.zeros(p.m) if y0 is None else np.asarray(y0, dtype=float)
    residual = np.inf
    total_iters = 0
    reliable = False
    for _ in range(max_calls):
        res = sapd_run(sub, params, w, y, rng=None, step_tol=tol)
        w, y = res.x_last, res.y_last
        residual = res.last_step_norm
        total_iters += res.iterations
        if residual <= tol:
            reliable = True
            break
    value = float(np.linalg.norm(x - w)) / lam
    return StationarityEstimate(lam=lam, prox_point=w, value=value,
                                residual=residual, reliable=reliable,
                                inner_iterations=total_iters)


def quadratic_gap(instance, x, y, center=None, mu_x: Optional[float] = None) -> float:
    """Exact max-min gap on a quadratic instance via its closed-form best
    responses.

    With center/mu_x given, the gap of the shifted-stage subproblem.
    Without them the native gap, which requires the instance to be strongly
    convex in x (A positive definite); otherwise the inner min is unbounded.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if center is not None:
        if mu_x is None:
            raise ConfigurationError("mu_x required together with center")
        return float(instance.stage_gap(x, y, np.asarray(center, dtype=float), mu_x))
    if float(np.min(np.linalg.eigvalsh(instance.a))) <= 0:
        raise ConfigurationError(
            "instance is not strongly convex in x; pass center and mu_x for a stage gap"
        )
    up = instance.value(x, instance.best_response_y(x))
    x_best = np.linalg.solve(instance.a, -instance.b @ y)
    lo = instance.value(x_best, y)
    return up - lo
