"""The Stokes-IB block operator on every level of the hierarchy.

On level ``l`` the operator acts on flat unknown vectors as::

    L_IB = [ A - dt E    G ]
           [   -D        0 ]

with ``A``, ``G`` and ``D`` rediscretized on the level and ``E`` the Eulerian
elasticity matrix, assembled from the structure on the finest level and
Galerkin-coarsened below it, ``E_l = R_u E_{l+1} P_u``. Since ``D = -G^T``
and ``E`` is symmetric, ``L_IB`` is symmetric.
"""
import logging
from functools import cached_property
from typing import List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from ibmg.solver.grid import BlockVector, GridHierarchy, LevelMismatchError, StaggeredLevel, build_hierarchy
from ibmg.solver.operators import FluidParams, apply_A, apply_D, apply_G, assemble_A, assemble_D, assemble_G
from ibmg.solver.transfer import TransferOperators

logger = logging.getLogger(__name__)


class StokesIBLevelSystem:
    """Block operator of one level; immutable once built."""

    def __init__(self, level: StaggeredLevel, params: FluidParams, E: Optional[sp.spmatrix] = None):
        self.level = level
        self.params = params
        if E is None:
            E = sp.csr_matrix((level.n_u, level.n_u))
        if E.shape != (level.n_u, level.n_u):
            raise LevelMismatchError(f"elasticity matrix of shape {E.shape} does not fit level n={level.n}")
        self.E = sp.csr_matrix(E)

    @property
    def dt(self) -> float:
        return self.params.dt

    @property
    def size(self) -> int:
        return self.level.size

    def apply_LIB(self, w: BlockVector) -> BlockVector:
        """Matrix-free application of the block operator."""
        level = self.level
        if w.p.shape != level.p_shape:
            raise LevelMismatchError(f"block vector with n={w.n} applied on level n={level.n}")
        a1, a2 = apply_A(self.params, w.u1, w.u2, level)
        g1, g2 = apply_G(w.p, level)
        out = BlockVector(a1 + g1, a2 + g2, -apply_D(w.u1, w.u2, level), level.level_index)
        if self.E.nnz:
            e1, e2 = level.velocity_from_array(self.E @ level.velocity_to_array(w.u1, w.u2))
            out.u1 -= self.dt * e1
            out.u2 -= self.dt * e2
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.apply_LIB(BlockVector.from_array(self.level, x)).to_array()

    def residual(self, w: BlockVector, b: BlockVector) -> BlockVector:
        """``b - L_IB w``."""
        Lw = self.apply_LIB(w)
        return BlockVector(b.u1 - Lw.u1, b.u2 - Lw.u2, b.p - Lw.p, self.level.level_index)

    def residual_vector(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        return b - self.matvec(x)

    @cached_property
    def A(self) -> sp.csr_matrix:
        return assemble_A(self.params, self.level)

    @cached_property
    def G(self) -> sp.csr_matrix:
        return assemble_G(self.level)

    @cached_property
    def D(self) -> sp.csr_matrix:
        return assemble_D(self.level)

    @cached_property
    def A_IB(self) -> sp.csr_matrix:
        return (self.A - self.dt * self.E).tocsr()

    @cached_property
    def L(self) -> sp.csr_matrix:
        """Assembled block operator."""
        return sp.bmat([[self.A_IB, self.G], [-self.D, None]], format="csr")

    @cached_property
    def diag_A_IB(self) -> np.ndarray:
        return self.A_IB.diagonal()

    @cached_property
    def M_hat(self) -> sp.csr_matrix:
        """Sparse Schur complement approximation ``D diag(A_IB)^-1 G``."""
        return (self.D @ sp.diags(1.0 / self.diag_A_IB) @ self.G).tocsr()


class SystemHierarchy:
    """One level system per grid level, coarsest first, with the transfers between them."""

    def __init__(self, grid: GridHierarchy, systems: Sequence[StokesIBLevelSystem], transfers: Sequence[TransferOperators]):
        if len(systems) != grid.n_levels or len(transfers) != grid.n_levels - 1:
            raise LevelMismatchError(
                f"{len(systems)} systems and {len(transfers)} transfers for a grid of {grid.n_levels} levels"
            )
        self.grid = grid
        self.systems: List[StokesIBLevelSystem] = list(systems)
        self.transfers: List[TransferOperators] = list(transfers)

    @property
    def n_levels(self) -> int:
        return len(self.systems)

    @property
    def finest(self) -> StokesIBLevelSystem:
        return self.systems[-1]

    @property
    def coarsest(self) -> StokesIBLevelSystem:
        return self.systems[0]

    def __getitem__(self, ell: int) -> StokesIBLevelSystem:
        return self.systems[ell]


def build_transfers(grid: GridHierarchy) -> List[TransferOperators]:
    return [TransferOperators(grid[ell - 1], grid[ell]) for ell in range(1, grid.n_levels)]


def build_hierarchy_systems(
    finest: StokesIBLevelSystem, transfers: Optional[Sequence[TransferOperators]] = None
) -> SystemHierarchy:
    """Rediscretize ``A``, ``G``, ``D`` on every level and Galerkin-coarsen the elasticity matrix."""
    grid = build_hierarchy(finest.level.n)
    if finest.level != grid.finest:
        raise LevelMismatchError(f"finest system has level index {finest.level.level_index}, expected {grid.n_levels - 1}")
    if transfers is None:
        transfers = build_transfers(grid)
    systems = [finest]
    E = finest.E
    for ell in range(grid.n_levels - 2, -1, -1):
        t = transfers[ell]
        E = (t.R_u @ E @ t.P_u).tocsr()
        systems.append(StokesIBLevelSystem(grid[ell], finest.params, E))
    systems.reverse()
    logger.info(
        f"system hierarchy built: {grid.n_levels} level(s), n={finest.level.n}..{grid.coarsest.n}, "
        f"finest E nnz={finest.E.nnz}"
    )
    return SystemHierarchy(grid, systems, transfers)


def border_pressure_mean(matrix: sp.spmatrix, pressure_mask: np.ndarray) -> sp.csr_matrix:
    """Append a Lagrange multiplier row and column enforcing zero pressure sum.

    The bordered matrix is nonsingular when the only null vector of ``matrix``
    is constant on the masked pressure entries.
    """
    e = sp.csr_matrix(pressure_mask.astype(float)[:, None])
    return sp.bmat([[matrix, e], [e.T, None]], format="csr")


def to_unknowns(system: StokesIBLevelSystem, v: Union[BlockVector, np.ndarray]) -> np.ndarray:
    """Flat unknown vector of ``v``, which may be a block vector or already flat."""
    if isinstance(v, BlockVector):
        return v.to_array()
    v = np.asarray(v, dtype=float)
    if v.shape != (system.size,):
        raise LevelMismatchError(f"vector of shape {v.shape} does not fit level n={system.level.n}")
    return v


def like_input(system: StokesIBLevelSystem, template: Union[BlockVector, np.ndarray], x: np.ndarray):
    """Return ``x`` as a block vector when ``template`` is one."""
    if isinstance(template, BlockVector):
        return BlockVector.from_array(system.level, x)
    return x
