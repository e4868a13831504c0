"""Outer FGMRES solve preconditioned by V-cycles, and one semi-implicit time step."""
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from ibmg.solver.coupling import CouplingOperators, assemble_SKJ, interpolate, spread
from ibmg.solver.fgmres import NUMERICAL_BREAKDOWN, fgmres
from ibmg.solver.grid import BlockVector, build_hierarchy, project_pressure_mean
from ibmg.solver.multigrid import v_cycle
from ibmg.solver.operators import CavityBC, FluidParams, Velocity, build_rhs
from ibmg.solver.smoothers import SmootherWrap
from ibmg.solver.structure import FiberMesh, assemble_K_matrix, flatten_positions, split_positions
from ibmg.solver.system import StokesIBLevelSystem, SystemHierarchy, build_hierarchy_systems, to_unknowns

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITERS = 100
CFL_FACTOR = 0.32


def default_time_step(N: int) -> float:
    """Time step ``0.32 h`` used by every benchmark problem."""
    return CFL_FACTOR / N


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    breakdown: bool = False
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def final_relres(self) -> float:
        return self.residual_history[-1] if self.residual_history else 0.0


def solve(
    hier: SystemHierarchy,
    smoother: SmootherWrap,
    b,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    nu1: int = 1,
    nu2: int = 1,
    callback: Optional[Callable[[int, float], None]] = None,
    config: Optional[Dict[str, Any]] = None,
) -> Tuple[BlockVector, SolveReport]:
    """Solve ``L_IB x = b`` on the finest level from a zero initial guess.

    Relative residuals are measured against ``||b||``; one V-cycle is the right
    preconditioner of every iteration.
    """
    finest = hier.finest
    level = finest.level
    rhs = project_pressure_mean(to_unknowns(finest, b).copy(), level)
    report = SolveReport(config=dict(config or {}))

    started = time.perf_counter()
    smoother.setup(hier.systems[1:])
    logger.info(f"smoothers ready on {hier.n_levels - 1} level(s) after {time.perf_counter() - started:.2f}s")

    b_norm = float(np.linalg.norm(rhs))
    if b_norm == 0.0:
        report.residual_history = [0.0]
        report.converged = True
        report.wall_time = time.perf_counter() - started
        return BlockVector.zeros(level), report

    zero = np.zeros(finest.size)

    def precondition(v: np.ndarray) -> np.ndarray:
        return v_cycle(hier, smoother, zero, v, nu1, nu2)

    def project(v: np.ndarray) -> np.ndarray:
        return project_pressure_mean(v, level)

    def monitor(k: int, resid: float) -> None:
        logger.debug(f"iteration {k}: relative residual {resid / b_norm:.3e}")
        if callback is not None:
            callback(k, resid / b_norm)

    result = fgmres(
        finest.matvec,
        rhs,
        precondition=precondition,
        tol=tol,
        maxiter=max_iters,
        project=project,
        callback=monitor,
    )
    report.wall_time = time.perf_counter() - started
    report.iterations = result.iterations
    report.residual_history = [r / b_norm for r in result.residual_norms]
    report.breakdown = result.breakdown == NUMERICAL_BREAKDOWN
    report.converged = report.final_relres <= tol
    if not report.converged:
        logger.warning(
            f"not converged after {report.iterations} iterations, relative residual {report.final_relres:.3e}"
        )
    else:
        logger.info(f"converged in {report.iterations} iterations ({report.wall_time:.2f}s)")
    return BlockVector.from_array(level, project_pressure_mean(result.x, level)), report


@dataclass
class StepState:
    """Velocity ``u^n`` (full face arrays) and structure configuration ``X^n``."""

    u: Optional[Velocity]
    meshes: List[FiberMesh]


@dataclass
class StepResult:
    u: Velocity
    p: np.ndarray
    meshes: List[FiberMesh]
    report: SolveReport
    hierarchy: SystemHierarchy = field(repr=False)
    coupling: CouplingOperators = field(repr=False)


def semi_implicit_step(
    state: StepState,
    params: FluidParams,
    N: int,
    smoother: SmootherWrap,
    bc: CavityBC = CavityBC(),
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    nu1: int = 1,
    nu2: int = 1,
    config: Optional[Dict[str, Any]] = None,
) -> StepResult:
    """Advance fluid and structure by one lagged semi-implicit step on an ``N x N`` grid.

    The structure forces are treated implicitly through ``A - dt S K J`` with
    ``S`` and ``J`` frozen at ``X^n``; positions are then updated with
    ``X^{n+1} = X^n + dt J u^{n+1}``.
    """
    grid = build_hierarchy(N)
    level = grid.finest
    ops = CouplingOperators(level, state.meshes)
    K = assemble_K_matrix(state.meshes)
    X = flatten_positions(state.meshes)

    b = build_rhs(params, bc, spread(ops, K @ X), level, u_prev=state.u)
    finest = StokesIBLevelSystem(level, params, assemble_SKJ(ops, K))
    hier = build_hierarchy_systems(finest)
    w, report = solve(hier, smoother, b, tol=tol, max_iters=max_iters, nu1=nu1, nu2=nu2, config=config)

    u = (w.u1, w.u2)
    X_next = X + params.dt * interpolate(ops, u)
    # an unconverged velocity may carry nodes out of the cavity; the report says so
    meshes = [
        m.with_positions(x, confined=report.converged)
        for m, x in zip(state.meshes, split_positions(state.meshes, X_next))
    ]
    escaped = [m.label for m in meshes if not m.inside_domain(m.X)]
    if escaped:
        logger.warning(f"structure(s) {', '.join(escaped)} left the unit square after an unconverged solve")
    return StepResult(u=u, p=w.p, meshes=meshes, report=report, hierarchy=hier, coupling=ops)
