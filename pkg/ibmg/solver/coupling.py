"""Immersed-boundary coupling: Peskin's four-point kernel, spreading and interpolation.

Interpolation is stored as a sparse matrix ``J`` from the interior velocity
unknowns of one level to the flattened Lagrangian velocities (layout of
:func:`ibmg.solver.structure.flatten_positions`). Spreading is its adjoint with
respect to the grid-weighted and quadrature-weighted inner products,
``S = J^T W / h^2`` with ``W`` the per-node weights ``ds1 * ds2``.
"""
import logging
from functools import cached_property
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from ibmg.solver.grid import StaggeredLevel
from ibmg.solver.structure import MeshOrList, as_mesh_list, flatten_positions

logger = logging.getLogger(__name__)

KERNEL_SUPPORT = 2
_OFFSETS = np.arange(-1, 3)
SKJ_SYMMETRY_TOL = 1e-12


class CouplingError(ValueError):
    """Raised when a structure cannot be coupled to a grid level."""

    pass


def phi(r):
    """Peskin's four-point kernel; accepts scalars and arrays."""
    a = np.abs(np.asarray(r, dtype=float))
    inner = (3.0 - 2.0 * a + np.sqrt(np.clip(1.0 + 4.0 * a - 4.0 * a ** 2, 0.0, None))) / 8.0
    outer = (5.0 - 2.0 * a - np.sqrt(np.clip(-7.0 + 12.0 * a - 4.0 * a ** 2, 0.0, None))) / 8.0
    value = np.where(a < 1.0, inner, np.where(a < 2.0, outer, 0.0))
    return float(value) if np.ndim(value) == 0 else value


def _stencil(coord: np.ndarray, h: float, shift: float) -> Tuple[np.ndarray, np.ndarray]:
    """Indices and weights of the four grid points ``(k + shift) * h`` around each coordinate."""
    s = coord / h - shift
    idx = np.floor(s).astype(int)[:, None] + _OFFSETS[None, :]
    return idx, phi(s[:, None] - idx)


class CouplingOperators:
    """Spreading and interpolation operators of fixed structures on one level."""

    def __init__(self, level: StaggeredLevel, meshes: MeshOrList):
        self.level = level
        self.meshes = as_mesh_list(meshes)
        if not self.meshes:
            raise CouplingError("at least one fiber mesh is required")
        self.nodes = np.concatenate([m.nodes for m in self.meshes])
        h = level.h
        too_close = np.minimum(self.nodes, 1.0 - self.nodes).min(axis=1) < KERNEL_SUPPORT * h
        if too_close.any():
            raise CouplingError(
                f"{int(too_close.sum())} fiber node(s) lie within {KERNEL_SUPPORT}h of the boundary on level n={level.n}"
            )

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weight of every Lagrangian DOF."""
        return np.concatenate([np.full(m.n_dofs, m.quadrature_weight) for m in self.meshes])

    @cached_property
    def J(self) -> sp.csr_matrix:
        """Interpolation matrix, Lagrangian DOFs by interior velocity unknowns."""
        n, h = self.level.n, self.level.h
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        node = np.arange(self.n_nodes)

        # x-faces sit at (i h, (j + 1/2) h)
        ix, wx = _stencil(x, h, 0.0)
        iy, wy = _stencil(y, h, 0.5)
        cols1 = (ix[:, :, None] - 1) * n + iy[:, None, :]
        w1 = wx[:, :, None] * wy[:, None, :]
        rows1 = np.broadcast_to((2 * node)[:, None, None], w1.shape)

        # y-faces sit at ((i + 1/2) h, j h)
        ix, wx = _stencil(x, h, 0.5)
        iy, wy = _stencil(y, h, 0.0)
        cols2 = self.level.n_u1 + ix[:, :, None] * (n - 1) + (iy[:, None, :] - 1)
        w2 = wx[:, :, None] * wy[:, None, :]
        rows2 = np.broadcast_to((2 * node + 1)[:, None, None], w2.shape)

        J = sp.coo_matrix(
            (
                np.concatenate([w1.ravel(), w2.ravel()]),
                (np.concatenate([rows1.ravel(), rows2.ravel()]), np.concatenate([cols1.ravel(), cols2.ravel()])),
            ),
            shape=(self.n_dofs, self.level.n_u),
        ).tocsr()
        J.eliminate_zeros()
        logger.debug(f"interpolation matrix on n={n}: {self.n_nodes} nodes, {J.nnz} nonzeros")
        return J

    @cached_property
    def S(self) -> sp.csr_matrix:
        """Spreading matrix, interior velocity unknowns by Lagrangian DOFs."""
        return (self.J.T @ sp.diags(self.weights) / self.level.h ** 2).tocsr()

    def positions(self) -> np.ndarray:
        return flatten_positions(self.meshes)


def spread(ops: CouplingOperators, F: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Spread flattened nodal forces onto full face arrays of the level."""
    F = np.asarray(F, dtype=float).ravel()
    if F.shape != (ops.n_dofs,):
        raise CouplingError(f"force array of size {F.size} does not match {ops.n_dofs} Lagrangian DOFs")
    return ops.level.velocity_from_array(ops.S @ F)


def interpolate(ops: CouplingOperators, u: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """Interpolate a velocity field to the nodes; returns the flattened nodal velocities."""
    return ops.J @ ops.level.velocity_to_array(*u)


def assemble_SKJ(ops: CouplingOperators, K: sp.spmatrix, symmetrize: bool = True) -> sp.csr_matrix:
    """Eulerian elasticity matrix ``S K J`` over the interior velocity unknowns.

    The product is symmetric whenever ``W K`` is; with ``symmetrize`` the
    round-off asymmetry is removed after checking it is below
    ``SKJ_SYMMETRY_TOL`` relative to the largest entry.
    """
    if K.shape != (ops.n_dofs, ops.n_dofs):
        raise CouplingError(f"stiffness matrix of shape {K.shape} does not match {ops.n_dofs} Lagrangian DOFs")
    E = (ops.S @ sp.csr_matrix(K) @ ops.J).tocsr()
    if not symmetrize or E.nnz == 0:
        return E
    scale = abs(E).max()
    asymmetry = abs(E - E.T).max()
    if asymmetry > SKJ_SYMMETRY_TOL * scale:
        raise CouplingError(f"S K J is not symmetric: |E - E^T| = {asymmetry:.3e}, |E| = {scale:.3e}")
    return ((E + E.T) * 0.5).tocsr()
