"""Transfers between consecutive levels.

Velocity is prolonged with lowest-order Raviart-Thomas interpolation (linear in
the normal direction, constant in the tangential one) and restricted with its
adjoint under the grid-weighted inner products, ``R_u = (h_f/h_c)^2 P_u^T``.
Pressure is prolonged bilinearly, with linear extrapolation in boundary cells,
and restricted by averaging the four child cells.
"""
from functools import cached_property
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from ibmg.solver.grid import REFINEMENT_RATIO, LevelMismatchError, StaggeredLevel

Velocity = Tuple[np.ndarray, np.ndarray]


def _normal_linear(nc: int) -> sp.csr_matrix:
    """Face values along the normal direction: ``nc + 1`` coarse faces to ``2 nc + 1`` fine faces."""
    P = sp.lil_matrix((2 * nc + 1, nc + 1))
    for I in range(nc + 1):
        P[2 * I, I] = 1.0
    for I in range(nc):
        P[2 * I + 1, I] = 0.5
        P[2 * I + 1, I + 1] = 0.5
    return P.tocsr()


def _tangential_constant(nc: int) -> sp.csr_matrix:
    """Injection of ``nc`` coarse cells into their ``2 nc`` children."""
    return sp.kron(sp.identity(nc), np.ones((2, 1)), format="csr")


def _cell_linear(nc: int) -> sp.csr_matrix:
    """Cell-centered linear interpolation with one-sided extrapolation in the end cells."""
    P = sp.lil_matrix((2 * nc, nc))
    for I in range(nc):
        left, right = 2 * I, 2 * I + 1
        P[left, I] = 0.75
        P[right, I] = 0.75
        if I > 0:
            P[left, I - 1] = 0.25
        else:
            P[left, I] += 0.5
            P[left, I + 1] = -0.25
        if I < nc - 1:
            P[right, I + 1] = 0.25
        else:
            P[right, I] += 0.5
            P[right, I - 1] = -0.25
    return P.tocsr()


class TransferOperators:
    """Sparse prolongation and restriction matrices between two consecutive levels."""

    def __init__(self, coarse: StaggeredLevel, fine: StaggeredLevel):
        if fine.n != REFINEMENT_RATIO * coarse.n:
            raise LevelMismatchError(f"levels n={coarse.n} and n={fine.n} are not consecutive")
        self.coarse = coarse
        self.fine = fine

    @cached_property
    def P_u1_full(self) -> sp.csr_matrix:
        nc = self.coarse.n
        return sp.kron(_normal_linear(nc), _tangential_constant(nc), format="csr")

    @cached_property
    def P_u2_full(self) -> sp.csr_matrix:
        nc = self.coarse.n
        return sp.kron(_tangential_constant(nc), _normal_linear(nc), format="csr")

    @cached_property
    def P_u(self) -> sp.csr_matrix:
        """Velocity prolongation on the interior unknowns."""
        nc = self.coarse.n
        normal = _normal_linear(nc)[1:-1, 1:-1]
        tangential = _tangential_constant(nc)
        return sp.block_diag(
            [sp.kron(normal, tangential), sp.kron(tangential, normal)], format="csr"
        )

    @cached_property
    def R_u(self) -> sp.csr_matrix:
        return ((self.fine.h / self.coarse.h) ** 2 * self.P_u.T).tocsr()

    @cached_property
    def P_p(self) -> sp.csr_matrix:
        P1 = _cell_linear(self.coarse.n)
        return sp.kron(P1, P1, format="csr")

    @cached_property
    def R_p(self) -> sp.csr_matrix:
        A1 = 0.5 * _tangential_constant(self.coarse.n).T
        return sp.kron(A1, A1, format="csr")

    @cached_property
    def P(self) -> sp.csr_matrix:
        """Block prolongation of flat unknown vectors."""
        return sp.block_diag([self.P_u, self.P_p], format="csr")

    @cached_property
    def R(self) -> sp.csr_matrix:
        return sp.block_diag([self.R_u, self.R_p], format="csr")

    def prolong(self, vec: np.ndarray) -> np.ndarray:
        if vec.shape != (self.coarse.size,):
            raise LevelMismatchError(f"vector of shape {vec.shape} does not live on level n={self.coarse.n}")
        return self.P @ vec

    def restrict(self, vec: np.ndarray) -> np.ndarray:
        if vec.shape != (self.fine.size,):
            raise LevelMismatchError(f"vector of shape {vec.shape} does not live on level n={self.fine.n}")
        return self.R @ vec


def prolong_velocity(ops: TransferOperators, u: Velocity) -> Velocity:
    """Prolong full coarse face arrays, boundary faces included."""
    ops.coarse.check_velocity(*u)
    u1 = (ops.P_u1_full @ u[0].ravel()).reshape(ops.fine.u1_shape)
    u2 = (ops.P_u2_full @ u[1].ravel()).reshape(ops.fine.u2_shape)
    return u1, u2


def restrict_velocity(ops: TransferOperators, u: Velocity) -> Velocity:
    """Adjoint of :func:`prolong_velocity` on the interior faces; boundary faces come back zero."""
    vec = ops.R_u @ ops.fine.velocity_to_array(*u)
    return ops.coarse.velocity_from_array(vec)


def prolong_pressure(ops: TransferOperators, p: np.ndarray) -> np.ndarray:
    ops.coarse.check_pressure(p)
    return (ops.P_p @ p.ravel()).reshape(ops.fine.p_shape)


def restrict_pressure(ops: TransferOperators, p: np.ndarray) -> np.ndarray:
    ops.fine.check_pressure(p)
    return (ops.R_p @ p.ravel()).reshape(ops.coarse.p_shape)
