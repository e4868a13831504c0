"""Lagrangian fiber meshes and their linear stiffness operator.

A :class:`FiberMesh` stores node positions as an array of shape ``(M1, M2, 2)``:
``l = 0 .. M1-1`` runs along a fiber (curvilinear coordinate ``s1``) and
``m = 0 .. M2-1`` indexes the fibers across the structure (``s2``). Flattened
Lagrangian degrees of freedom follow C order, so coordinate ``c`` of node
``(l, m)`` sits at index ``(l * M2 + m) * 2 + c``.

Fibers are zero-rest-length linear springs, ``F = alpha * d2X/ds1^2``; fibers with
different ``m`` do not interact.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

GEOMETRIES = ("thick", "thin", "suspension")

# empirical explicit-stability stiffness threshold of the thick shell at unit gamma
STIFFNESS_REFERENCE = 3.93 / 0.005
CODIM1_STIFFNESS_FACTOR = 7.0

CENTER = (0.5, 0.5)
SHELL_RADIUS = 0.25
SHELL_WIDTH = 1.0 / 16.0
SUSPENSION_RADIUS = 1.0 / 16.0
NODE_SPACING_FACTOR = 2.0 / 3.0


class StructureError(ValueError):
    """Raised for invalid fiber geometries or mismatched node arrays."""

    pass


def fiber_stiffness(gamma: float, geometry: str) -> float:
    """Return the fiber stiffness ``alpha`` for a relative stiffness ``gamma``."""
    if geometry not in GEOMETRIES:
        raise StructureError(f"unknown geometry '{geometry}', expected one of {GEOMETRIES}")
    if gamma < 0:
        raise StructureError(f"relative stiffness must be non-negative, got gamma={gamma}")
    alpha = gamma * STIFFNESS_REFERENCE
    if geometry != "thick":
        alpha *= CODIM1_STIFFNESS_FACTOR
    return alpha


@dataclass(frozen=True)
class StiffnessSpec:
    gamma: float
    geometry: str

    @property
    def alpha(self) -> float:
        return fiber_stiffness(self.gamma, self.geometry)


@dataclass(frozen=True, eq=False)
class FiberMesh:
    """An immutable collection of fibers sharing one stiffness.

    Nodes must lie in the open unit square unless ``confined`` is false, which
    is how the structure leaves a step whose linear solve did not converge.
    """

    X: np.ndarray
    ds1: float
    ds2: float
    periodic_s1: bool = True
    alpha: float = 0.0
    label: str = field(default="", compare=False)
    confined: bool = field(default=True, compare=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 3 or X.shape[2] != 2:
            raise StructureError(f"node array must have shape (M1, M2, 2), got {X.shape}")
        if X.shape[0] < 3:
            raise StructureError(f"a fiber needs at least 3 nodes, got M1={X.shape[0]}")
        if not (self.ds1 > 0 and self.ds2 > 0):
            raise StructureError(f"curvilinear spacings must be positive, got ds1={self.ds1}, ds2={self.ds2}")
        if self.confined and not self.inside_domain(X):
            raise StructureError(f"fiber mesh '{self.label}' has nodes outside the open unit square")
        X.flags.writeable = False
        object.__setattr__(self, "X", X)

    @property
    def M1(self) -> int:
        return self.X.shape[0]

    @property
    def M2(self) -> int:
        return self.X.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.M1 * self.M2

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def quadrature_weight(self) -> float:
        """Spreading weight ``ds1 * ds2`` carried by every node."""
        return self.ds1 * self.ds2

    @property
    def nodes(self) -> np.ndarray:
        """Node positions as an ``(n_nodes, 2)`` array."""
        return self.X.reshape(-1, 2)

    @staticmethod
    def inside_domain(X: np.ndarray) -> bool:
        return bool(((X > 0.0) & (X < 1.0)).all())

    def with_positions(self, X: np.ndarray, confined: bool = True) -> "FiberMesh":
        """Return a copy of the mesh moved to ``X``."""
        return replace(self, X=np.asarray(X, dtype=float).reshape(self.X.shape), confined=confined)

    def check_shape(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.size != self.n_dofs:
            raise StructureError(f"node array of shape {X.shape} does not match mesh with {self.n_nodes} nodes")
        return X.reshape(self.X.shape)


MeshOrList = Union[FiberMesh, Sequence[FiberMesh]]


def as_mesh_list(meshes: MeshOrList) -> List[FiberMesh]:
    if isinstance(meshes, FiberMesh):
        return [meshes]
    return list(meshes)


def _node_count(circumference: float, h: float) -> int:
    return max(int(round(circumference / (NODE_SPACING_FACTOR * h))), 3)


def make_thick_annulus(N: int, gamma: float = 1.0) -> FiberMesh:
    """Thick elastic shell: ``M2`` concentric circular fibers across a band of width 1/16."""
    if N <= 0 or N % 32:
        raise StructureError(f"the thick annulus needs N divisible by 32, got N={N}")
    M1 = 19 * N // 8
    M2 = 3 * N // 32 + 1
    ds1 = 2.0 * np.pi / M1
    ds2 = SHELL_WIDTH / (M2 - 1)
    s1 = np.arange(M1) * ds1
    radii = SHELL_RADIUS + np.arange(M2) * ds2
    X = np.empty((M1, M2, 2))
    X[..., 0] = CENTER[0] + np.outer(np.cos(s1), radii)
    X[..., 1] = CENTER[1] + np.outer(np.sin(s1), radii)
    logger.debug(f"thick annulus N={N}: M1={M1}, M2={M2}")
    return FiberMesh(X=X, ds1=ds1, ds2=ds2, alpha=fiber_stiffness(gamma, "thick"), label="thick")


def _circle(center, radius: float, M1: int, alpha: float, label: str) -> FiberMesh:
    ds1 = 2.0 * np.pi / M1
    s1 = np.arange(M1) * ds1
    X = np.empty((M1, 1, 2))
    X[:, 0, 0] = center[0] + radius * np.cos(s1)
    X[:, 0, 1] = center[1] + radius * np.sin(s1)
    return FiberMesh(X=X, ds1=ds1, ds2=1.0, alpha=alpha, label=label)


def make_thin_membrane(N: int, gamma: float = 1.0) -> FiberMesh:
    """Thin membrane: one closed fiber of radius 1/4 around the cavity center."""
    if N <= 0 or N % 8:
        raise StructureError(f"the thin membrane needs N divisible by 8, got N={N}")
    return _circle(CENTER, SHELL_RADIUS, 19 * N // 8, fiber_stiffness(gamma, "thin"), "thin")


def make_suspension(
    N: int,
    seed: int,
    gamma: float = 1.0,
    n_structures: int = 16,
    margin: Optional[float] = None,
    max_attempts: int = 20000,
    max_restarts: int = 50,
) -> List[FiberMesh]:
    """Suspension of ``n_structures`` circles of radius 1/16 at seeded random positions.

    Centers are placed one at a time by rejection sampling; a placement that
    exhausts ``max_attempts`` candidates restarts from scratch.
    """
    if N <= 0 or N % 8:
        raise StructureError(f"the suspension needs N divisible by 8, got N={N}")
    if n_structures < 1:
        raise StructureError(f"n_structures must be positive, got {n_structures}")
    h = 1.0 / N
    margin = 4.0 * h if margin is None else margin
    r = SUSPENSION_RADIUS
    low, high = r + margin, 1.0 - r - margin
    if low >= high:
        raise StructureError(f"margin={margin} leaves no room for circles of radius {r}")
    min_distance = 2.0 * r + margin
    rng = np.random.default_rng(seed)

    centers: List[np.ndarray] = []
    for restart in range(max_restarts):
        centers = []
        for _ in range(n_structures):
            candidates = rng.uniform(low, high, size=(max_attempts, 2))
            if centers:
                placed = np.array(centers)
                dist = np.linalg.norm(candidates[:, None, :] - placed[None, :, :], axis=2)
                ok = np.flatnonzero((dist > min_distance).all(axis=1))
            else:
                ok = np.arange(1)
            if not ok.size:
                break
            centers.append(candidates[ok[0]])
        if len(centers) == n_structures:
            logger.debug(f"suspension placed after {restart + 1} attempt(s), seed={seed}")
            break
    else:
        raise StructureError(
            f"could not place {n_structures} structures with margin={margin} after {max_restarts} restarts (seed={seed})"
        )

    M1 = _node_count(2.0 * np.pi * r, h)
    alpha = fiber_stiffness(gamma, "suspension")
    return [_circle(c, r, M1, alpha, f"suspension-{k}") for k, c in enumerate(centers)]


def make_structures(
    problem: str, N: int, gamma: float, seed: int = 0, n_structures: int = 16
) -> List[FiberMesh]:
    """Build the immersed structures of one of the benchmark problems."""
    if problem == "thick":
        return [make_thick_annulus(N, gamma)]
    if problem == "thin":
        return [make_thin_membrane(N, gamma)]
    if problem == "suspension":
        return make_suspension(N, seed, gamma, n_structures=n_structures)
    raise StructureError(f"unknown problem '{problem}', expected one of {GEOMETRIES}")


def _half_differences(mesh: FiberMesh, X: np.ndarray) -> np.ndarray:
    """``D_s1 X`` at the half indices ``l + 1/2``; wraps around for closed fibers."""
    if mesh.periodic_s1:
        return (np.roll(X, -1, axis=0) - X) / mesh.ds1
    return (X[1:] - X[:-1]) / mesh.ds1


def _divergence_of_flux(mesh: FiberMesh, flux: np.ndarray) -> np.ndarray:
    if mesh.periodic_s1:
        return (flux - np.roll(flux, 1, axis=0)) / mesh.ds1
    F = np.zeros((flux.shape[0] + 1,) + flux.shape[1:])
    F[:-1] += flux
    F[1:] -= flux
    return F / mesh.ds1


def tension_force(
    mesh: FiberMesh, X: np.ndarray, tension: Optional[Callable[[np.ndarray], np.ndarray]] = None
) -> np.ndarray:
    """Nodal force ``D_s1(T tau)`` for a tension law ``T(|D_s1 X|)``.

    The default law is ``T = alpha * |D_s1 X|``, a zero-rest-length spring, for
    which ``T tau = alpha * D_s1 X`` and the result equals :func:`apply_K`.
    """
    X = mesh.check_shape(X)
    dX = _half_differences(mesh, X)
    stretch = np.linalg.norm(dX, axis=-1, keepdims=True)
    T = mesh.alpha * stretch if tension is None else tension(stretch)
    tau = np.divide(dX, stretch, out=np.zeros_like(dX), where=stretch > 0)
    return _divergence_of_flux(mesh, T * tau)


def apply_K(mesh: FiberMesh, X: np.ndarray) -> np.ndarray:
    """Linear fiber force ``alpha * D_s1 D_s1 X``, shaped like ``X``."""
    X = mesh.check_shape(X)
    return mesh.alpha * _divergence_of_flux(mesh, _half_differences(mesh, X))


def _second_difference_matrix(mesh: FiberMesh) -> sp.csr_matrix:
    M1 = mesh.M1
    ones = np.ones(M1)
    C = sp.diags([ones[:-1], -2.0 * ones, ones[:-1]], [-1, 0, 1], format="lil")
    if mesh.periodic_s1:
        C[0, M1 - 1] = 1.0
        C[M1 - 1, 0] = 1.0
    else:
        C[0, 0] = -1.0
        C[M1 - 1, M1 - 1] = -1.0
    return C.tocsr() / mesh.ds1 ** 2


def assemble_K_matrix(meshes: MeshOrList) -> sp.csr_matrix:
    """Sparse stiffness matrix over the flattened Lagrangian DOFs of one or more meshes."""
    blocks = []
    for mesh in as_mesh_list(meshes):
        blocks.append(mesh.alpha * sp.kron(_second_difference_matrix(mesh), sp.identity(mesh.M2 * 2)))
    return sp.block_diag(blocks, format="csr")


def flatten_positions(meshes: MeshOrList) -> np.ndarray:
    return np.concatenate([m.X.ravel() for m in as_mesh_list(meshes)])


def split_positions(meshes: MeshOrList, flat: np.ndarray) -> List[np.ndarray]:
    """Inverse of :func:`flatten_positions`."""
    out = []
    offset = 0
    for mesh in as_mesh_list(meshes):
        out.append(np.asarray(flat[offset: offset + mesh.n_dofs]).reshape(mesh.X.shape))
        offset += mesh.n_dofs
    if offset != len(flat):
        raise StructureError(f"flat array of length {len(flat)} does not match {offset} Lagrangian DOFs")
    return out
