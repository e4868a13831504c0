"""Second-order staggered finite-difference operators of the cavity problem.

``A = (rho/dt) I - mu * Laplacian``, ``G = grad`` and ``D = div`` act on full face
and cell arrays (see :mod:`ibmg.solver.grid`). All operators are the homogeneous
versions: Dirichlet data enters only through :func:`build_rhs`.

Tangential velocity next to a wall uses the ghost value
``2 * wall_value - first_interior``, the usual second-order MAC wall treatment.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from ibmg.solver.grid import BlockVector, StaggeredLevel

Velocity = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class FluidParams:
    """Fluid parameters; ``rho = 0`` selects Stokes flow."""

    mu: float
    dt: float
    rho: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"viscosity must be positive, got mu={self.mu}")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got dt={self.dt}")
        if self.rho < 0:
            raise ValueError(f"density must be non-negative, got rho={self.rho}")

    @property
    def mass_coefficient(self) -> float:
        return self.rho / self.dt


@dataclass(frozen=True)
class CavityBC:
    """Regularized lid-driven cavity: ``u(x, 1) = lid_speed * (1 - cos(2 pi x)) / 2``, zero elsewhere."""

    lid_speed: float = 1.0

    def lid_profile(self, x: np.ndarray) -> np.ndarray:
        return self.lid_speed * 0.5 * (1.0 - np.cos(2.0 * np.pi * x))


def _laplacian_u1(u1: np.ndarray, h: float) -> np.ndarray:
    c = u1[1:-1, :]
    lap_x = u1[2:, :] - 2.0 * c + u1[:-2, :]
    below = np.empty_like(c)
    above = np.empty_like(c)
    below[:, 1:] = c[:, :-1]
    below[:, 0] = -c[:, 0]
    above[:, :-1] = c[:, 1:]
    above[:, -1] = -c[:, -1]
    return (lap_x + above - 2.0 * c + below) / h ** 2


def _laplacian_u2(u2: np.ndarray, h: float) -> np.ndarray:
    c = u2[:, 1:-1]
    lap_y = u2[:, 2:] - 2.0 * c + u2[:, :-2]
    left = np.empty_like(c)
    right = np.empty_like(c)
    left[1:, :] = c[:-1, :]
    left[0, :] = -c[0, :]
    right[:-1, :] = c[1:, :]
    right[-1, :] = -c[-1, :]
    return (lap_y + right - 2.0 * c + left) / h ** 2


def apply_A(params: FluidParams, u1: np.ndarray, u2: np.ndarray, level: StaggeredLevel) -> Velocity:
    """Apply the momentum operator; boundary faces of the result are zero."""
    level.check_velocity(u1, u2)
    h = level.h
    out1 = np.zeros(level.u1_shape)
    out2 = np.zeros(level.u2_shape)
    out1[1:-1, :] = params.mass_coefficient * u1[1:-1, :] - params.mu * _laplacian_u1(u1, h)
    out2[:, 1:-1] = params.mass_coefficient * u2[:, 1:-1] - params.mu * _laplacian_u2(u2, h)
    return out1, out2


def apply_G(p: np.ndarray, level: StaggeredLevel) -> Velocity:
    """Discrete gradient of a cell-centered field onto interior faces."""
    level.check_pressure(p)
    h = level.h
    g1 = np.zeros(level.u1_shape)
    g2 = np.zeros(level.u2_shape)
    g1[1:-1, :] = (p[1:, :] - p[:-1, :]) / h
    g2[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / h
    return g1, g2


def apply_D(u1: np.ndarray, u2: np.ndarray, level: StaggeredLevel) -> np.ndarray:
    """Discrete divergence, reading boundary faces as stored."""
    level.check_velocity(u1, u2)
    h = level.h
    return (u1[1:, :] - u1[:-1, :]) / h + (u2[:, 1:] - u2[:, :-1]) / h


def build_rhs(
    params: FluidParams,
    bc: CavityBC,
    spread_force: Velocity,
    level: StaggeredLevel,
    u_prev: Optional[Velocity] = None,
) -> BlockVector:
    """Right-hand side of the block system: force, lid lift and the previous velocity."""
    f1, f2 = spread_force
    level.check_velocity(f1, f2)
    h = level.h
    b = BlockVector.zeros(level)
    b.u1[1:-1, :] = f1[1:-1, :]
    b.u2[:, 1:-1] = f2[:, 1:-1]
    # ghost above the top row carries 2 * lid; its stencil weight moves to the right side
    x_faces = np.arange(1, level.n) * h
    b.u1[1:-1, -1] += params.mu * 2.0 * bc.lid_profile(x_faces) / h ** 2
    if u_prev is not None:
        level.check_velocity(*u_prev)
        b.u1[1:-1, :] += params.mass_coefficient * u_prev[0][1:-1, :]
        b.u2[:, 1:-1] += params.mass_coefficient * u_prev[1][:, 1:-1]
    return b


def _second_difference(m: int, ghost_ends: bool = False) -> sp.csr_matrix:
    t = sp.diags([np.ones(m - 1), -2.0 * np.ones(m), np.ones(m - 1)], [-1, 0, 1], format="lil")
    if ghost_ends:
        t[0, 0] = -3.0
        t[m - 1, m - 1] = -3.0
    return t.tocsr()


def _first_difference(n: int) -> sp.csr_matrix:
    """Map ``n`` cell values to the ``n - 1`` interior faces between them."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def assemble_laplacian(level: StaggeredLevel) -> sp.csr_matrix:
    """Vector Laplacian on the interior velocity unknowns."""
    n = level.n
    h2 = level.h ** 2
    interior = _second_difference(n - 1) / h2
    ghosted = _second_difference(n, ghost_ends=True) / h2
    eye_n = sp.identity(n, format="csr")
    eye_m = sp.identity(n - 1, format="csr")
    lap1 = sp.kron(interior, eye_n) + sp.kron(eye_m, ghosted)
    lap2 = sp.kron(ghosted, eye_m) + sp.kron(eye_n, interior)
    return sp.block_diag([lap1, lap2], format="csr")


def assemble_A(params: FluidParams, level: StaggeredLevel) -> sp.csr_matrix:
    lap = assemble_laplacian(level)
    return (params.mass_coefficient * sp.identity(level.n_u, format="csr") - params.mu * lap).tocsr()


def assemble_G(level: StaggeredLevel) -> sp.csr_matrix:
    n = level.n
    diff = _first_difference(n) / level.h
    eye_n = sp.identity(n, format="csr")
    return sp.vstack([sp.kron(diff, eye_n), sp.kron(eye_n, diff)], format="csr")


def assemble_D(level: StaggeredLevel) -> sp.csr_matrix:
    """Divergence restricted to interior unknowns; the negative transpose of ``G``."""
    return (-assemble_G(level).T).tocsr()
