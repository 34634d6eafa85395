"""Proximal operators and projections used by the solvers and the DRO benchmark.

All operators take the point first and the prox step second, and are pure
functions of their arguments.
"""

import numpy as np

from .errors import ConfigurationError


def prox_zero(v, step):
    """Prox of f = 0: the identity."""
    return np.asarray(v, dtype=float)


def prox_box(v, step, lower, upper):
    """Prox of the indicator of a box: coordinatewise clamp (step irrelevant)."""
    v = np.asarray(v, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), v.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), v.shape)
    if np.any(lower > upper):
        raise ConfigurationError("box bounds must satisfy lower <= upper")
    return np.clip(v, lower, upper)


def project_simplex(v):
    """Euclidean projection onto the unit simplex {y >= 0, sum(y) = 1}.

    Sort-then-threshold method: with u the coordinates of v in decreasing
    order, the active set size is the largest j with
    u_j + (1 - sum_{i<=j} u_i)/j > 0, and the projection is
    max(v + lam, 0) for the corresponding shift lam.  O(d log d),
    deterministic (ties resolved by the cumulative rule).
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ConfigurationError("project_simplex expects a nonempty vector")
    if not np.all(np.isfinite(v)):
        raise ConfigurationError("project_simplex expects finite input")
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    # j = 1 always qualifies: u_1 + (1 - u_1) = 1 > 0
    rho = np.nonzero(u + (1.0 - cssv) / j > 0)[0][-1]
    lam = (1.0 - cssv[rho]) / (rho + 1.0)
    return np.maximum(v + lam, 0.0)


def prox_quadratic_over_simplex(v, step, eta2, n_scale):
    """Prox of g(y) = (eta2/2)*||n_scale*y - 1||^2 plus the simplex indicator.

    The quadratic has Hessian eta2*n_scale^2*I, so
        argmin_{y in simplex} g(y) + ||y - v||^2/(2*step)
    reduces to a simplex projection of the shifted point
        (v/step + eta2*n_scale*1) / (eta2*n_scale^2 + 1/step).
    """
    if step <= 0:
        raise ConfigurationError("prox step must be positive")
    if eta2 <= 0 or n_scale < 1:
        raise ConfigurationError("need eta2 > 0 and n_scale >= 1")
    v = np.asarray(v, dtype=float)
    shifted = (v / step + eta2 * n_scale) / (eta2 * n_scale**2 + 1.0 / step)
    return project_simplex(shifted)


def make_prox(kind, **kwargs):
    """Build a (point, step) -> point prox callable from a variant tag.

    kind: "zero" | "box" | "simplex" | "quadratic_over_simplex" |
    "scaled_squared_distance".
    """
    if kind == "zero":
        return prox_zero
    if kind == "box":
        lower, upper = kwargs["lower"], kwargs["upper"]
        return lambda v, step: prox_box(v, step, lower, upper)
    if kind == "simplex":
        return lambda v, step: project_simplex(v)
    if kind == "quadratic_over_simplex":
        eta2, n_scale = kwargs["eta2"], kwargs["n_scale"]
        return lambda v, step: prox_quadratic_over_simplex(v, step, eta2, n_scale)
    if kind == "scaled_squared_distance":
        # g(y) = (weight/2)*||y - anchor||^2
        weight = kwargs["weight"]
        anchor = np.asarray(kwargs["anchor"], dtype=float)
        if weight < 0:
            raise ConfigurationError("weight must be nonnegative")
        return lambda v, step: (np.asarray(v, float) + step * weight * anchor) / (
            1.0 + step * weight
        )
    raise ConfigurationError(f"unknown prox kind: {kind!r}")
