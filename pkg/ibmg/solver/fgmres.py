"""Flexible GMRES with right preconditioning.

Modified Gram-Schmidt Arnoldi with Givens rotations; the preconditioned
directions are stored, so the preconditioner may change from one iteration to
the next. No restarts.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import solve_triangular

logger = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]


class SolverError(RuntimeError):
    """Raised when a linear solve cannot proceed."""

    pass


HAPPY_BREAKDOWN = "happy"
NUMERICAL_BREAKDOWN = "numerical"


@dataclass
class FGMRESResult:
    x: np.ndarray
    residual_norms: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    breakdown: Optional[str] = None

    @property
    def final_residual_norm(self) -> float:
        return self.residual_norms[-1]


def fgmres(
    matvec: Operator,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    precondition: Optional[Operator] = None,
    tol: float = 0.0,
    maxiter: int = 100,
    reference_norm: Optional[float] = None,
    project: Optional[Operator] = None,
    callback: Optional[Callable[[int, float], None]] = None,
) -> FGMRESResult:
    """Run at most ``maxiter`` FGMRES iterations on ``matvec(x) = b``.

    Iteration stops once the residual estimate drops to ``tol * reference_norm``
    (``reference_norm`` defaults to ``||b||``); ``tol = 0`` runs all iterations.
    ``project`` is applied to every preconditioned direction and ``callback``
    receives the iteration count and the residual estimate.
    """
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x) if x0 is not None else b.copy()
    beta = float(np.linalg.norm(r))
    ref = float(np.linalg.norm(b)) if reference_norm is None else reference_norm
    result = FGMRESResult(x=x, residual_norms=[beta])
    if beta == 0.0 or beta <= tol * ref:
        result.converged = True
        return result

    V = np.zeros((maxiter + 1, n))
    Z = np.zeros((maxiter, n))
    H = np.zeros((maxiter + 1, maxiter))
    cs = np.zeros(maxiter)
    sn = np.zeros(maxiter)
    g = np.zeros(maxiter + 1)
    g[0] = beta
    V[0] = r / beta
    breakdown_tol = np.finfo(float).eps * beta

    k = 0
    for j in range(maxiter):
        z = precondition(V[j]) if precondition is not None else V[j].copy()
        if project is not None:
            z = project(z)
        Z[j] = z
        w = matvec(z)
        for i in range(j + 1):
            H[i, j] = np.dot(w, V[i])
            w -= H[i, j] * V[i]
        h_next = float(np.linalg.norm(w))
        H[j + 1, j] = h_next

        for i in range(j):
            temp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = temp
        denom = np.hypot(H[j, j], H[j + 1, j])
        if not np.isfinite(denom) or denom == 0.0:
            logger.warning(f"FGMRES numerical breakdown at iteration {j + 1}")
            result.breakdown = NUMERICAL_BREAKDOWN
            break
        cs[j] = H[j, j] / denom
        sn[j] = H[j + 1, j] / denom
        H[j, j] = denom
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]

        k = j + 1
        resid = abs(g[j + 1])
        result.residual_norms.append(resid)
        if callback is not None:
            callback(k, resid)
        if resid <= tol * ref:
            result.converged = True
            break
        if h_next <= breakdown_tol:
            # invariant Krylov space: the least-squares solution is final
            result.breakdown = HAPPY_BREAKDOWN
            result.converged = True
            break
        V[j + 1] = w / h_next

    if k:
        y = solve_triangular(H[:k, :k], g[:k])
        x += Z[:k].T @ y
    result.x = x
    result.iterations = k
    return result
