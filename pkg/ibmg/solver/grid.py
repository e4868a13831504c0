"""Uniform staggered-grid hierarchy and the block vectors living on it.

Array conventions, on a level with ``n`` cells per side and ``h = 1/n``:

- ``u1`` has shape ``(n+1, n)``; ``u1[i, j]`` sits on the x-face at ``(i*h, (j+1/2)*h)``.
- ``u2`` has shape ``(n, n+1)``; ``u2[i, j]`` sits on the y-face at ``((i+1/2)*h, j*h)``.
- ``p`` has shape ``(n, n)``; ``p[i, j]`` sits at the cell center ``((i+1/2)*h, (j+1/2)*h)``.

Faces with ``i in (0, n)`` for ``u1`` and ``j in (0, n)`` for ``u2`` lie on the
physical boundary and hold Dirichlet data. Solvers work on flat vectors that only
contain the unknowns, ordered as interior ``u1`` (C order), interior ``u2``
(C order), then ``p`` (C order).
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

COARSEST_N = 8
REFINEMENT_RATIO = 2


class HierarchyError(ValueError):
    """Dedicated exception for invalid grid hierarchies."""

    pass


class LevelMismatchError(ValueError):
    """Raised when fields from different levels are combined."""

    pass


@dataclass(frozen=True)
class StaggeredLevel:
    """One MAC level of the hierarchy."""

    level_index: int
    n: int

    @property
    def h(self) -> float:
        """Grid spacing."""
        return 1.0 / self.n

    @property
    def u1_shape(self) -> Tuple[int, int]:
        return self.n + 1, self.n

    @property
    def u2_shape(self) -> Tuple[int, int]:
        return self.n, self.n + 1

    @property
    def p_shape(self) -> Tuple[int, int]:
        return self.n, self.n

    @property
    def n_u1(self) -> int:
        """Number of interior x-face unknowns."""
        return (self.n - 1) * self.n

    @property
    def n_u2(self) -> int:
        """Number of interior y-face unknowns."""
        return self.n * (self.n - 1)

    @property
    def n_u(self) -> int:
        return self.n_u1 + self.n_u2

    @property
    def n_p(self) -> int:
        return self.n * self.n

    @property
    def size(self) -> int:
        """Total number of unknowns of the block system on this level."""
        return self.n_u + self.n_p

    @property
    def u_slice(self) -> slice:
        return slice(0, self.n_u)

    @property
    def p_slice(self) -> slice:
        return slice(self.n_u, self.size)

    @cached_property
    def u1_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical ``(x, y)`` of every x-face, each of shape ``u1_shape``."""
        x = np.arange(self.n + 1) * self.h
        y = (np.arange(self.n) + 0.5) * self.h
        return tuple(np.meshgrid(x, y, indexing="ij"))

    @cached_property
    def u2_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical ``(x, y)`` of every y-face, each of shape ``u2_shape``."""
        x = (np.arange(self.n) + 0.5) * self.h
        y = np.arange(self.n + 1) * self.h
        return tuple(np.meshgrid(x, y, indexing="ij"))

    @cached_property
    def p_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical ``(x, y)`` of every cell center."""
        c = (np.arange(self.n) + 0.5) * self.h
        return tuple(np.meshgrid(c, c, indexing="ij"))

    def split(self, vec: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return reshaped views ``(u1_interior, u2_interior, p)`` of a flat unknown vector."""
        if vec.shape != (self.size,):
            raise LevelMismatchError(f"vector of shape {vec.shape} does not fit level n={self.n}")
        n = self.n
        u1 = vec[: self.n_u1].reshape(n - 1, n)
        u2 = vec[self.n_u1: self.n_u].reshape(n, n - 1)
        p = vec[self.n_u:].reshape(n, n)
        return u1, u2, p

    def velocity_to_array(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        """Flatten the interior faces of full face arrays."""
        self.check_velocity(u1, u2)
        return np.concatenate([u1[1:-1, :].ravel(), u2[:, 1:-1].ravel()])

    def velocity_from_array(self, vec_u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Expand a flat velocity vector into full face arrays with zero boundary faces."""
        if vec_u.shape != (self.n_u,):
            raise LevelMismatchError(f"velocity vector of shape {vec_u.shape} does not fit level n={self.n}")
        n = self.n
        u1 = np.zeros(self.u1_shape)
        u2 = np.zeros(self.u2_shape)
        u1[1:-1, :] = vec_u[: self.n_u1].reshape(n - 1, n)
        u2[:, 1:-1] = vec_u[self.n_u1:].reshape(n, n - 1)
        return u1, u2

    def check_velocity(self, u1: np.ndarray, u2: np.ndarray) -> None:
        if u1.shape != self.u1_shape or u2.shape != self.u2_shape:
            raise LevelMismatchError(
                f"velocity of shapes {u1.shape}, {u2.shape} does not fit level n={self.n}"
            )

    def check_pressure(self, p: np.ndarray) -> None:
        if p.shape != self.p_shape:
            raise LevelMismatchError(f"pressure of shape {p.shape} does not fit level n={self.n}")


@dataclass(frozen=True)
class GridHierarchy:
    """Levels ``0 .. n_levels-1`` of the unit square, coarsest first."""

    finest_n: int
    domain_extent: Tuple[float, float] = (1.0, 1.0)
    refinement_ratio: int = REFINEMENT_RATIO

    @property
    def n_levels(self) -> int:
        return int(round(np.log2(self.finest_n // COARSEST_N))) + 1

    @cached_property
    def levels(self) -> Tuple[StaggeredLevel, ...]:
        return tuple(
            StaggeredLevel(level_index=ell, n=COARSEST_N * self.refinement_ratio ** ell)
            for ell in range(self.n_levels)
        )

    @property
    def finest(self) -> StaggeredLevel:
        return self.levels[-1]

    @property
    def coarsest(self) -> StaggeredLevel:
        return self.levels[0]

    def __getitem__(self, ell: int) -> StaggeredLevel:
        return self.levels[ell]

    def __len__(self) -> int:
        return self.n_levels


def build_hierarchy(finest_n: int) -> GridHierarchy:
    """Build the hierarchy ending at ``finest_n`` cells per side, which must be ``8 * 2**k``."""
    k = 0
    n = COARSEST_N
    while n < finest_n:
        n *= REFINEMENT_RATIO
        k += 1
    if n != finest_n:
        raise HierarchyError(f"finest_n={finest_n} is not of the form {COARSEST_N}*2^k")
    return GridHierarchy(finest_n=finest_n)


@dataclass
class BlockVector:
    """Paired velocity and pressure fields on one level."""

    u1: np.ndarray
    u2: np.ndarray
    p: np.ndarray
    level_index: int

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def level(self) -> StaggeredLevel:
        return StaggeredLevel(level_index=self.level_index, n=self.n)

    @classmethod
    def zeros(cls, level: StaggeredLevel) -> "BlockVector":
        return cls(
            u1=np.zeros(level.u1_shape),
            u2=np.zeros(level.u2_shape),
            p=np.zeros(level.p_shape),
            level_index=level.level_index,
        )

    @classmethod
    def from_array(cls, level: StaggeredLevel, vec: np.ndarray) -> "BlockVector":
        """Build a block vector from a flat unknown vector; boundary faces are zero."""
        u1, u2 = level.velocity_from_array(vec[level.u_slice])
        p = vec[level.p_slice].reshape(level.p_shape).copy()
        return cls(u1=u1, u2=u2, p=p, level_index=level.level_index)

    def to_array(self) -> np.ndarray:
        """Flatten the unknowns (interior faces and all cell centers)."""
        return np.concatenate([self.u1[1:-1, :].ravel(), self.u2[:, 1:-1].ravel(), self.p.ravel()])

    def copy(self) -> "BlockVector":
        return BlockVector(self.u1.copy(), self.u2.copy(), self.p.copy(), self.level_index)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u1).all() and np.isfinite(self.u2).all() and np.isfinite(self.p).all())


def _check_same_level(a: BlockVector, b: BlockVector) -> None:
    if a.level_index != b.level_index or a.p.shape != b.p.shape:
        raise LevelMismatchError(
            f"block vectors live on different levels ({a.level_index}, n={a.n}) and ({b.level_index}, n={b.n})"
        )


def _checked(v: BlockVector) -> BlockVector:
    if not v.is_finite():
        raise FloatingPointError(f"non-finite entries in block vector on level {v.level_index}")
    return v


def block_inner_product(a: BlockVector, b: BlockVector) -> float:
    """Grid-weighted inner product over every stored face and cell value."""
    _check_same_level(a, b)
    h2 = a.h ** 2
    return float(
        (np.vdot(a.u1, b.u1) + np.vdot(a.u2, b.u2) + np.vdot(a.p, b.p)) * h2
    )


def axpy(alpha: float, x: BlockVector, y: BlockVector) -> BlockVector:
    """Return ``y + alpha * x``."""
    _check_same_level(x, y)
    return _checked(BlockVector(y.u1 + alpha * x.u1, y.u2 + alpha * x.u2, y.p + alpha * x.p, y.level_index))


def scale(alpha: float, x: BlockVector) -> BlockVector:
    """Return ``alpha * x``."""
    return _checked(BlockVector(alpha * x.u1, alpha * x.u2, alpha * x.p, x.level_index))


def copy(x: BlockVector) -> BlockVector:
    return x.copy()


def project_pressure_mean(vec: np.ndarray, level: StaggeredLevel) -> np.ndarray:
    """Remove the mean of the pressure block of a flat unknown vector, in place."""
    p = vec[level.p_slice]
    p -= p.mean()
    return vec
