"""Recursive V-cycle over a :class:`~ibmg.solver.system.SystemHierarchy`."""
import logging
import threading
import weakref
from typing import Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ibmg.solver.fgmres import SolverError
from ibmg.solver.grid import project_pressure_mean
from ibmg.solver.smoothers import SmootherWrap, Vector, smooth
from ibmg.solver.system import StokesIBLevelSystem, SystemHierarchy, border_pressure_mean, like_input, to_unknowns

logger = logging.getLogger(__name__)

_coarse_factors: "weakref.WeakKeyDictionary[StokesIBLevelSystem, Tuple[np.ndarray, np.ndarray]]" = (
    weakref.WeakKeyDictionary()
)
_coarse_lock = threading.Lock()


def _coarse_factorization(sys: StokesIBLevelSystem) -> Tuple[np.ndarray, np.ndarray]:
    with _coarse_lock:
        factors = _coarse_factors.get(sys)
        if factors is None:
            level = sys.level
            mask = np.zeros(level.size, dtype=bool)
            mask[level.p_slice] = True
            bordered = border_pressure_mean(sys.L, mask).toarray()
            lu, piv = lu_factor(bordered, check_finite=True)
            pivots = np.abs(np.diag(lu))
            if pivots.min() <= np.finfo(float).eps * pivots.max():
                raise SolverError(f"coarse factorization on level n={level.n} is singular")
            factors = (lu, piv)
            _coarse_factors[sys] = factors
            logger.debug(f"factorized coarse system n={level.n}, {bordered.shape[0]} unknowns")
    return factors


def coarse_solve(sys: StokesIBLevelSystem, b: Vector) -> Vector:
    """Direct solve on the coarsest level; pressure mean removed from ``b`` and from the result."""
    level = sys.level
    rhs = project_pressure_mean(to_unknowns(sys, b).copy(), level)
    x = lu_solve(_coarse_factorization(sys), np.append(rhs, 0.0))[:-1]
    return like_input(sys, b, project_pressure_mean(x, level))


def _cycle(hier: SystemHierarchy, wrap: SmootherWrap, ell: int, x: np.ndarray, b: np.ndarray, nu1: int, nu2: int) -> np.ndarray:
    sys = hier[ell]
    if ell == 0:
        return coarse_solve(sys, b)
    if nu1:
        x = smooth(wrap, sys, x, b, nu1)
    r = sys.residual_vector(x, b)
    transfer = hier.transfers[ell - 1]
    coarse_b = project_pressure_mean(transfer.restrict(r), transfer.coarse)
    correction = _cycle(hier, wrap, ell - 1, np.zeros(transfer.coarse.size), coarse_b, nu1, nu2)
    x = x + transfer.prolong(correction)
    if nu2:
        x = smooth(wrap, sys, x, b, nu2)
    return x


def v_cycle(hier: SystemHierarchy, smoother: SmootherWrap, w: Vector, b: Vector, nu1: int = 1, nu2: int = 1) -> Vector:
    """One V-cycle on the finest level of ``hier`` starting from ``w``."""
    if nu1 < 0 or nu2 < 0 or nu1 + nu2 < 1:
        raise ValueError(f"invalid smoothing counts nu1={nu1}, nu2={nu2}")
    finest = hier.finest
    x = _cycle(hier, smoother, hier.n_levels - 1, to_unknowns(finest, w).copy(), to_unknowns(finest, b), nu1, nu2)
    return like_input(finest, w, x)
