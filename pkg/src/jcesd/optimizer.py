"""Constellation fitting: maximize log|det U| under per-sample box constraints.

The complex ``N_s x N_s`` unmixing matrix ``V = A + iB`` is handled in its
real embedding ``U = [[A, -B], [B, A]]``.  Only ``A`` and ``B`` are free,
so the block structure ``U11 = U22, U12 = -U21`` holds exactly at every
iterate.  The constraints ``|(U y_i)_r| <= b`` are linear in ``(A, B)``;
the solver is a feasible SQP method whose quadratic subproblems are
solved as least-distance problems through non-negative least squares.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import (
    DegenerateSamplesError,
    InfeasibleStartError,
    InvalidArgumentError,
    NumericalFailureError,
    SingularMatrixError,
    StructureViolationError,
)

CONVERGED = "converged"
MAX_ITER = "max-iter"
INFEASIBLE_START = "infeasible-start"

MAX_HESSIAN_CONDITION = 1e6


def real_embed(A):
    """``[[Re A, -Im A], [Im A, Re A]]``."""
    A = np.asarray(A)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def real_stack(Y):
    """Stack real over imaginary parts: ``(N, m)`` complex -> ``(2N, m)`` real."""
    Y = np.asarray(Y)
    return np.concatenate([Y.real, Y.imag], axis=0)


def structure_violation(U) -> float:
    n = U.shape[0] // 2
    return float(max(np.abs(U[:n, :n] - U[n:, n:]).max(),
                     np.abs(U[:n, n:] + U[n:, :n]).max()))


def complex_extract(U, tol=1e-8):
    """Complex matrix whose real embedding is ``U``."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] != U.shape[1] or U.shape[0] % 2:
        raise InvalidArgumentError(f"expected a square matrix of even size, got {U.shape}")
    viol = structure_violation(U)
    if viol > tol * max(1.0, np.abs(U).max()):
        raise StructureViolationError(f"block structure violated by {viol:.3e}")
    n = U.shape[0] // 2
    return U[:n, :n] + 1j * U[n:, :n]


def channel_from_fit(U):
    """Equivalent channel from the blocks of ``U^{-1}`` (block-averaged)."""
    U = np.asarray(U, dtype=float)
    n = U.shape[0] // 2
    try:
        Ui = np.linalg.inv(U)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("fitted matrix is singular") from exc
    return (Ui[:n, :n] + Ui[n:, n:]) / 2 + 1j * (Ui[n:, :n] - Ui[:n, n:]) / 2


def params_from_matrix(U):
    """Free parameters ``[vec(U11), vec(U21)]`` of a structured matrix."""
    n = U.shape[0] // 2
    return np.concatenate([U[:n, :n].ravel(), U[n:, :n].ravel()])


def matrix_from_params(x, N_s):
    A = x[:N_s * N_s].reshape(N_s, N_s)
    B = x[N_s * N_s:].reshape(N_s, N_s)
    return np.block([[A, -B], [B, A]])


def objective_and_gradient(x, N_s):
    """``log|det U(x)|`` and its gradient in the free parameters.

    The matrix gradient ``(U^{-1})^T`` is pulled back through the block
    structure: ``dA = G11 + G22``, ``dB = G21 - G12``.
    """
    U = matrix_from_params(np.asarray(x, dtype=float), N_s)
    sign, logdet = np.linalg.slogdet(U)
    if sign == 0 or not np.isfinite(logdet):
        raise SingularMatrixError("U is singular")
    G = np.linalg.inv(U).T
    n = N_s
    gA = G[:n, :n] + G[n:, n:]
    gB = G[n:, :n] - G[:n, n:]
    return float(logdet), np.concatenate([gA.ravel(), gB.ravel()])


def constraint_matrix(samples, N_s):
    """Rows ``c`` with ``c @ x = (U(x) y_i)_r`` for every sample and output row."""
    yr, yi = samples[:N_s].T, samples[N_s:].T  # (m, N_s)
    m = samples.shape[1]
    n = N_s * N_s
    eye = np.eye(N_s)

    def block(u):  # (m, r, n): output row r picks parameter row r
        return np.einsum("ro,ic->iroc", eye, u).reshape(m, N_s, n)

    # Re(V y) = A yr - B yi ; Im(V y) = B yr + A yi
    top = np.concatenate([block(yr), block(-yi)], axis=-1)
    bot = np.concatenate([block(yi), block(yr)], axis=-1)
    return np.concatenate([top, bot], axis=1).reshape(m * 2 * N_s, 2 * n)


def nnls(A, b, max_iter=None):
    """Lawson-Hanson non-negative least squares ``min ||Ax - b||, x >= 0``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    max_iter = 3 * n + 50 if max_iter is None else max_iter
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    excluded = np.zeros(n, dtype=bool)
    tol = 10 * np.finfo(float).eps * np.abs(A).sum(axis=0).max(initial=0.0) * max(m, n)
    w = A.T @ b
    it = 0
    while True:
        cand = ~passive & ~excluded
        if not cand.any() or w[cand].max() <= tol:
            break
        j = int(np.argmax(np.where(cand, w, -np.inf)))
        passive[j] = True
        first = True
        while True:
            it += 1
            if it > max_iter:
                raise NumericalFailureError("nnls did not converge")
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > tol):
                x = z
                excluded[:] = False
                break
            if first and z[j] <= tol:
                # the entering column cannot move off zero; drop it for this pass
                passive[j] = False
                excluded[j] = True
                break
            first = False
            bad = passive & (z <= tol)
            alpha = np.min(x[bad] / (x[bad] - z[bad]))
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
        w = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b))


def least_distance(E, f):
    """``min ||z||`` subject to ``E z >= f``.

    Returns ``(z, active)`` where ``active`` flags the rows carrying
    positive multipliers, or ``(None, None)`` when the system is infeasible.
    """
    m, n = E.shape
    M = np.vstack([E.T, f[None, :]])
    e = np.zeros(n + 1)
    e[-1] = 1.0
    u, _ = nnls(M, e)
    r = M @ u - e
    if abs(r[-1]) < 1e-14:
        return None, None
    return -r[:n] / r[-1], u > 0


def _polish(H, g, G, h, d, active):
    """Re-solve the subproblem with the active rows as equalities."""
    Ga = G[active]
    k = Ga.shape[0]
    if k == 0:
        return np.linalg.solve(H, -g)
    n = H.shape[0]
    K = np.block([[H, Ga.T], [Ga, np.zeros((k, k))]])
    sol = np.linalg.lstsq(K, np.concatenate([-g, h[active]]), rcond=None)[0]
    return sol[:n]


def qp_step(H, g, G, h):
    """``min 1/2 d'Hd + g'd`` subject to ``G d <= h`` for positive definite ``H``."""
    L = np.linalg.cholesky(H)
    w = np.linalg.solve(L, g)
    if G.shape[0] == 0:
        return -np.linalg.solve(L.T, w)
    Et = np.linalg.solve(L, G.T).T  # G L^{-T}
    z, active = least_distance(-Et, -(h + Et @ w))
    if z is None:
        return None
    d = np.linalg.solve(L.T, z - w)
    # the least-distance solution is accurate only to the conditioning of H;
    # an equality solve on its active rows restores the constraint residuals
    dp = _polish(H, g, G, h, d, active)
    scale = 1e-12 * (1.0 + np.abs(h).max())
    if np.all(np.isfinite(dp)) and (G @ dp - h).max() <= max(scale, (G @ d - h).max()):
        return dp
    return d


@dataclass
class FittingProblem:
    """Box-constrained log-det fit.

    ``samples`` are real-stacked received symbols ``(2 N_s, m)``; ``bound``
    is the half-width ``b`` of the box every fitted sample must lie in.
    """

    samples: np.ndarray
    bound: float
    dim: int
    constraint_tol: float = 1e-8
    step_tol: float = 1e-9
    max_iterations: int = 500
    active_fraction: Optional[float] = 0.05

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape[0] != 2 * self.dim:
            raise InvalidArgumentError(
                f"samples must have 2*N_s={2 * self.dim} rows, got {self.samples.shape[0]}")
        if not self.bound > 0:
            raise InvalidArgumentError("bound must be positive")


@dataclass
class FittingSolution:
    U: np.ndarray
    objective: float
    iterations: int
    status: str
    history: List[float] = field(default_factory=list, repr=False)


def _bfgs_update(B, s, y):
    Bs = B @ s
    sBs = s @ Bs
    if sBs <= 0:
        return B
    sy = s @ y
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1 - theta) * Bs
        sy = s @ y
    B = B + np.outer(y, y) / sy - np.outer(Bs, Bs) / sBs
    # bounded conditioning keeps the least-distance subproblem accurate
    lam, Q = np.linalg.eigh(0.5 * (B + B.T))
    lam = np.maximum(lam, lam[-1] / MAX_HESSIAN_CONDITION)
    return (Q * lam) @ Q.T


def solve(problem: FittingProblem, U0) -> FittingSolution:
    """Maximize ``log|det U|`` s.t. ``||U y_i||_inf <= b`` from a feasible start.

    Every accepted iterate is feasible (the constraints are linear in the
    free parameters and steps are clipped by a ratio test) and improves the
    objective (Armijo backtracking).
    """
    N_s = problem.dim
    S = problem.samples
    b = problem.bound
    if np.linalg.matrix_rank(S) < 2 * N_s:
        raise DegenerateSamplesError("samples do not span the real signal space")
    U0 = np.asarray(U0, dtype=float)
    complex_extract(U0, tol=1e-8)
    x = params_from_matrix(U0)

    C = constraint_matrix(S, N_s)
    G = np.unique(np.vstack([C, -C]), axis=0)
    slack = b - G @ x
    if slack.min() < -problem.constraint_tol:
        raise InfeasibleStartError(
            f"start violates the box by {-slack.min():.3e} (bound {b:.4g})")

    try:
        f, g = objective_and_gradient(x, N_s)
    except SingularMatrixError as exc:
        raise NumericalFailureError("singular starting point") from exc
    n = x.size

    def fresh_hessian():
        return np.eye(n) * max(np.linalg.norm(g) / max(np.linalg.norm(x), 1e-12), 1e-8)

    Bk = fresh_hessian()
    fresh = True
    history = [f]
    status = MAX_ITER
    it = 0
    for it in range(1, problem.max_iterations + 1):
        slack = b - G @ x
        if problem.active_fraction is None:
            work = np.ones(slack.size, dtype=bool)
        else:
            work = slack <= problem.active_fraction * b
        d = qp_step(Bk, -g, G[work], slack[work])
        if d is None or not np.all(np.isfinite(d)):
            raise NumericalFailureError("quadratic subproblem failed")
        if np.abs(d).max() <= problem.step_tol * (1.0 + np.abs(x).max()):
            status = CONVERGED
            break
        # ratio test; rows a full step moves by less than the tolerance are
        # subproblem round-off and do not limit the step
        Gd = G @ d
        grow = Gd > 0.25 * problem.constraint_tol
        alpha = 1.0
        if grow.any():
            room = np.maximum(b - G @ x, 0.0)
            alpha = min(1.0, float(np.min(room[grow] / Gd[grow])))
        slope = g @ d
        accepted = False
        while alpha > 1e-12:
            x_new = x + alpha * d
            try:
                f_new, g_new = objective_and_gradient(x_new, N_s)
            except SingularMatrixError:
                alpha *= 0.5
                continue
            if not np.isfinite(f_new):
                raise NumericalFailureError("non-finite objective")
            if f_new >= f + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        stalled = not accepted or (
            np.abs(x_new - x).max() <= problem.step_tol * (1.0 + np.abs(x).max())
            and f_new - f <= problem.step_tol)
        if accepted:
            Bk = _bfgs_update(Bk, x_new - x, -(g_new - g))
            x, f, g = x_new, f_new, g_new
            history.append(f)
        if stalled:
            if fresh:
                status = CONVERGED
                break
            # a blocked step under the quasi-Newton model: retry from scratch
            Bk = fresh_hessian()
            fresh = True
        elif accepted:
            fresh = False
    return FittingSolution(matrix_from_params(x, N_s), f, it, status, history)
