"""Initialization quality: perturbation bound of the pilot start and the
exceedance probability of a random start.

A random start ``U0`` with i.i.d. ``CN(0, alpha^2)`` entries has error
``R = U0 - U*`` whose scaled energy ``||R||_F^2 / (alpha^2 / 2)`` is
non-central chi-squared with ``2 N_s^2`` degrees of freedom and
non-centrality ``2 ||U*||_F^2 / alpha^2``; its tail is a generalized
Marcum Q-function.
"""

import numpy as np
from scipy.special import gammaincc, gammaln

from .errors import InvalidArgumentError, NumericalFailureError, OutOfRegimeError

MARCUM_TOL = 1e-10
MARCUM_MAX_TERMS = 100_000


def init_bound_check(H, delta):
    """Compare the inverse perturbation with its first-order bound.

    Returns
    -------
    lhs : float
        ``||(H + delta)^{-1} - H^{-1}||_F``.
    rhs : float
        ``||H^{-1}||_2^2 ||delta||_F``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    if H.shape != delta.shape or H.shape[0] != H.shape[1]:
        raise InvalidArgumentError("H and delta must be square and of equal shape")
    Hi = np.linalg.inv(H)
    if np.linalg.norm(Hi @ delta, 2) >= 1:
        raise OutOfRegimeError("||H^-1 delta||_2 >= 1: series expansion not valid")
    lhs = np.linalg.norm(np.linalg.inv(H + delta) - Hi)
    rhs = np.linalg.norm(Hi, 2) ** 2 * np.linalg.norm(delta)
    return float(lhs), float(rhs)


def marcum_q(M, a, b, tol=MARCUM_TOL, max_terms=MARCUM_MAX_TERMS):
    """Generalized Marcum Q-function ``Q_M(a, b)`` for ``M > 0``.

    Poisson mixture of regularized upper incomplete gamma functions,
    ``sum_j Pois(j; a^2/2) Gamma(M + j, b^2/2) / Gamma(M + j)``, truncated
    once the unsummed Poisson mass falls below ``tol`` (each gamma factor is
    at most one, so that mass bounds the truncation error).
    """
    if M <= 0 or a < 0 or b < 0:
        raise InvalidArgumentError("need M > 0, a >= 0, b >= 0")
    mu = 0.5 * a * a
    x = 0.5 * b * b
    if mu == 0:
        return float(gammaincc(M, x))
    total = 0.0
    mass = 0.0
    log_mu = np.log(mu)
    for j in range(max_terms):
        w = np.exp(j * log_mu - mu - gammaln(j + 1))
        total += w * gammaincc(M + j, x)
        mass += w
        if j > mu and 1.0 - mass < tol:
            return float(min(total, 1.0))
    raise NumericalFailureError(f"Marcum Q series did not converge in {max_terms} terms")


def random_init_exceedance(eps, alpha, U_star, N_s=None):
    """Probability that a random ``CN(0, alpha^2)`` start lies farther than
    ``eps`` (Frobenius) from ``U_star``."""
    if not (alpha > 0 and eps > 0):
        raise InvalidArgumentError("alpha and eps must be positive")
    U_star = np.atleast_2d(np.asarray(U_star))
    if N_s is None:
        N_s = U_star.shape[0]
    a = np.sqrt(2.0) * np.linalg.norm(U_star) / alpha
    b = np.sqrt(2.0) * eps / alpha
    return marcum_q(N_s * N_s, a, b)
