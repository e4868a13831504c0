"""Smoothers for the Stokes-IB block system.

Three inner smoothers act on flat unknown vectors of one level:

- restricted additive Schwarz (RAS): one residual, independent subdomain solves,
  updates written only on the restricted (non-overlapping) sets;
- restricted multiplicative Schwarz (RMS): the same subdomains, visited in
  lexicographic order with the residual refreshed after each update;
- a Schur complement smoother (SC) applying an approximate block factorization
  of the operator, with Chebyshev iterations standing in for the inverses of
  ``A_IB`` and of the Schur complement ``D A_IB^-1 G``.

:class:`SmootherWrap` applies a fixed number of FGMRES iterations
right-preconditioned by one inner application.
"""
import logging
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from pyamg.relaxation.relaxation import gauss_seidel

from ibmg.solver.fgmres import fgmres
from ibmg.solver.grid import BlockVector, StaggeredLevel, project_pressure_mean
from ibmg.solver.system import StokesIBLevelSystem, border_pressure_mean, like_input, to_unknowns

logger = logging.getLogger(__name__)

SMOOTHER_KINDS = ("RAS", "RMS", "SC")

Vector = Union[BlockVector, np.ndarray]


class PartitionError(ValueError):
    """Raised for subdomain layouts that do not tile a level."""

    pass


def default_threads() -> int:
    """Subdomain solves run serially unless the caller passes a thread count."""
    return 1


def _box_dofs(level: StaggeredLevel, x0: int, x1: int, y0: int, y1: int) -> np.ndarray:
    """Sorted unknown indices on or inside the closed cell box ``[x0, x1] x [y0, y1]``."""
    n = level.n
    i = np.arange(max(x0, 1), min(x1, n - 1) + 1)
    j = np.arange(y0, y1)
    u1 = ((i[:, None] - 1) * n + j[None, :]).ravel()
    i = np.arange(x0, x1)
    j = np.arange(max(y0, 1), min(y1, n - 1) + 1)
    u2 = level.n_u1 + (i[:, None] * (n - 1) + (j[None, :] - 1)).ravel()
    p = level.n_u + (np.arange(x0, x1)[:, None] * n + np.arange(y0, y1)[None, :]).ravel()
    return np.concatenate([u1, u2, p]).astype(np.int64)


@dataclass
class Subdomain:
    """One overlapping box: its unknowns, restricted update set and factorized block."""

    box: Tuple[int, int]
    cells: Tuple[int, int, int, int]
    dofs: np.ndarray
    restricted: np.ndarray
    restricted_local: np.ndarray
    lu: Optional[spla.SuperLU] = field(default=None, repr=False)
    bordered: bool = False

    def solve(self, r_local: np.ndarray) -> np.ndarray:
        if self.bordered:
            return self.lu.solve(np.append(r_local, 0.0))[:-1]
        return self.lu.solve(r_local)


def _factorize(sub: Subdomain, L_i: sp.csc_matrix, pressure_mask: np.ndarray, covers_all_pressure: bool) -> None:
    """Sparse LU of one subdomain block.

    Box-boundary normal faces close the pressure of a box smaller than the
    level, so only the whole-level box carries the constant-pressure mode; it is
    bordered with the pressure mean like the coarse solve. A factorization that
    still hits an exactly singular pivot falls back to the same bordering.
    """
    if not covers_all_pressure:
        try:
            sub.lu = spla.splu(L_i)
            return
        except RuntimeError:
            logger.warning(f"singular subdomain block at box {sub.box}, bordering with the pressure mean")
    sub.lu = spla.splu(border_pressure_mean(L_i, pressure_mask).tocsc())
    sub.bordered = True


class SubdomainPartition:
    """Boxes of ``box_size`` cells tiling one level, each extended by ``overlap`` cells.

    A box larger than the level is clipped to the level size.
    """

    def __init__(self, system: StokesIBLevelSystem, box_size: int, overlap: int):
        level = system.level
        n = level.n
        if box_size <= 0 or overlap < 0:
            raise PartitionError(f"invalid subdomain layout box={box_size}, overlap={overlap}")
        b = min(box_size, n)
        if n % b:
            raise PartitionError(f"box size {box_size} does not divide the level size n={n}")
        self.system = system
        self.box_size = b
        self.overlap = overlap
        self.n_boxes_per_side = n // b

        L = system.L
        claimed = np.zeros(level.size, dtype=bool)
        self.subdomains: List[Subdomain] = []
        for bi in range(self.n_boxes_per_side):
            for bj in range(self.n_boxes_per_side):
                x0, x1, y0, y1 = bi * b, (bi + 1) * b, bj * b, (bj + 1) * b
                own = _box_dofs(level, x0, x1, y0, y1)
                restricted = own[~claimed[own]]
                claimed[restricted] = True
                cells = (max(0, x0 - overlap), min(n, x1 + overlap), max(0, y0 - overlap), min(n, y1 + overlap))
                dofs = _box_dofs(level, *cells)
                sub = Subdomain(
                    box=(bi, bj),
                    cells=cells,
                    dofs=dofs,
                    restricted=restricted,
                    restricted_local=np.searchsorted(dofs, restricted),
                )
                pressure_mask = dofs >= level.n_u
                covers_all = int(pressure_mask.sum()) == level.n_p
                _factorize(sub, L[dofs][:, dofs].tocsc(), pressure_mask, covers_all)
                self.subdomains.append(sub)
        if not claimed.all():
            raise PartitionError(f"{int((~claimed).sum())} unknowns on level n={n} are not covered")
        logger.debug(
            f"partitioned level n={n} into {len(self.subdomains)} subdomain(s), box={b}, overlap={overlap}"
        )

    @property
    def level(self) -> StaggeredLevel:
        return self.system.level

    def __len__(self) -> int:
        return len(self.subdomains)

    def __iter__(self):
        return iter(self.subdomains)


def partition_level(system: StokesIBLevelSystem, box_size: int, overlap: int) -> SubdomainPartition:
    return SubdomainPartition(system, box_size, overlap)


class SchwarzSmoother:
    """Restricted Schwarz sweep over a fixed partition, additive or multiplicative."""

    def __init__(self, partition: SubdomainPartition, multiplicative: bool = False, threads: Optional[int] = None):
        self.partition = partition
        self.system = partition.system
        self.multiplicative = multiplicative
        self.threads = default_threads() if threads is None else max(int(threads), 1)
        if multiplicative:
            L = self.system.L.tocsc()
            self._columns = [L[:, sub.restricted].tocsr() for sub in partition]

    def _additive(self, x: np.ndarray, r: np.ndarray) -> np.ndarray:
        def local_update(sub: Subdomain) -> np.ndarray:
            return sub.solve(r[sub.dofs])[sub.restricted_local]

        subs = self.partition.subdomains
        if self.threads > 1 and len(subs) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                updates = list(pool.map(local_update, subs))
        else:
            updates = [local_update(sub) for sub in subs]
        # restricted sets are disjoint
        for sub, delta in zip(subs, updates):
            x[sub.restricted] += delta
        return x

    def _multiplicative(self, x: np.ndarray, r: np.ndarray) -> np.ndarray:
        for sub, columns in zip(self.partition.subdomains, self._columns):
            delta = sub.solve(r[sub.dofs])[sub.restricted_local]
            x[sub.restricted] += delta
            r -= columns @ delta
        return x

    def apply(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        """One sweep from ``x``; returns a new vector."""
        x = x.copy()
        r = self.system.residual_vector(x, b)
        x = self._multiplicative(x, r) if self.multiplicative else self._additive(x, r)
        return project_pressure_mean(x, self.system.level)


def ras_apply(part: SubdomainPartition, sys: StokesIBLevelSystem, w: Vector, b: Vector, threads: Optional[int] = None) -> Vector:
    """One restricted additive Schwarz sweep."""
    if part.system is not sys:
        raise PartitionError("partition was built for a different level system")
    x = SchwarzSmoother(part, multiplicative=False, threads=threads).apply(to_unknowns(sys, w), to_unknowns(sys, b))
    return like_input(sys, w, x)


def rms_apply(part: SubdomainPartition, sys: StokesIBLevelSystem, w: Vector, b: Vector) -> Vector:
    """One restricted multiplicative Schwarz sweep, subdomains in lexicographic order."""
    if part.system is not sys:
        raise PartitionError("partition was built for a different level system")
    x = SchwarzSmoother(part, multiplicative=True).apply(to_unknowns(sys, w), to_unknowns(sys, b))
    return like_input(sys, w, x)


@dataclass(frozen=True)
class SCSmootherConfig:
    cheby_iters_A: int = 2
    cheby_iters_M: int = 2
    gs_sweeps: int = 1
    power_iters: int = 10
    lower_factor: float = 0.1
    upper_factor: float = 1.1
    seed: int = 0

    def __post_init__(self):
        for name in ("cheby_iters_A", "cheby_iters_M", "gs_sweeps", "power_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")


def symmetric_gauss_seidel(B: sp.csr_matrix, sweeps: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """Symmetric Gauss-Seidel on ``B`` from a zero initial guess, as a linear operator."""

    def apply(r: np.ndarray) -> np.ndarray:
        z = np.zeros_like(r)
        gauss_seidel(B, z, np.ascontiguousarray(r, dtype=float), iterations=sweeps, sweep="symmetric")
        return z

    return apply


def estimate_lambda_max(
    op: Callable[[np.ndarray], np.ndarray],
    precondition: Callable[[np.ndarray], np.ndarray],
    size: int,
    iterations: int = 10,
    seed: int = 0,
) -> Optional[float]:
    """Power-method estimate of the largest eigenvalue of ``precondition(op(.))``; None on failure."""
    v = np.random.default_rng(seed).standard_normal(size)
    v /= np.linalg.norm(v)
    lam = None
    for _ in range(iterations):
        w = precondition(op(v))
        norm = float(np.linalg.norm(w))
        if not np.isfinite(norm) or norm == 0.0:
            return None
        lam = norm
        v = w / norm
    return lam


class Chebyshev:
    """Fixed number of preconditioned Chebyshev iterations from a zero initial guess."""

    def __init__(
        self,
        op: Callable[[np.ndarray], np.ndarray],
        precondition: Callable[[np.ndarray], np.ndarray],
        iterations: int,
        interval: Tuple[float, float],
    ):
        self.op = op
        self.precondition = precondition
        self.iterations = iterations
        self.lambda_min, self.lambda_max = interval

    def __call__(self, b: np.ndarray) -> np.ndarray:
        theta = 0.5 * (self.lambda_max + self.lambda_min)
        delta = 0.5 * (self.lambda_max - self.lambda_min)
        sigma = theta / delta
        rho = 1.0 / sigma
        x = np.zeros_like(b)
        r = b.copy()
        d = self.precondition(r) / theta
        for k in range(self.iterations):
            x += d
            if k == self.iterations - 1:
                break
            r -= self.op(d)
            z = self.precondition(r)
            rho_next = 1.0 / (2.0 * sigma - rho)
            d = rho_next * rho * d + (2.0 * rho_next / delta) * z
            rho = rho_next
        return x


def _chebyshev_interval(
    op, precondition, size: int, cfg: SCSmootherConfig, name: str, bound: Optional[float] = None
) -> Tuple[float, float]:
    """``[lower_factor, upper_factor] * lambda`` around the estimated largest eigenvalue.

    ``bound`` is a known upper bound on the spectrum; the interval then reaches
    at least that far, since a power estimate from a few iterations lies below
    the true maximum.
    """
    lam = estimate_lambda_max(op, precondition, size, cfg.power_iters, cfg.seed)
    if lam is None:
        logger.warning(f"eigenvalue estimate for {name} failed, using fallback interval")
        lam = 1.0
    if bound is not None:
        lam = max(lam, bound / cfg.upper_factor)
    return cfg.lower_factor * lam, cfg.upper_factor * lam


class SCSmoother:
    """Approximate block factorization smoother.

    ``a_solve`` and ``m_solve`` replace the approximate inverses of ``A_IB`` and
    of the Schur complement ``D A_IB^-1 G`` when given.
    """

    def __init__(
        self,
        system: StokesIBLevelSystem,
        cfg: SCSmootherConfig = SCSmootherConfig(),
        a_solve: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        m_solve: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self.system = system
        self.cfg = cfg
        level = system.level
        A = system.A_IB
        G, D = system.G, system.D
        if a_solve is None:
            gs_A = symmetric_gauss_seidel(A, cfg.gs_sweeps)
            # symmetric Gauss-Seidel on an SPD matrix keeps the preconditioned spectrum in (0, 1]
            interval = _chebyshev_interval(A.dot, gs_A, level.n_u, cfg, f"A_IB on n={level.n}", bound=1.0)
            a_solve = Chebyshev(A.dot, gs_A, cfg.cheby_iters_A, interval)
        self.a_solve = a_solve
        if m_solve is None:
            # Chebyshev runs on the positive semidefinite -D A^-1 G preconditioned by -M_hat
            neg_M_hat = (-system.M_hat).tocsr()

            def neg_schur(q: np.ndarray) -> np.ndarray:
                return -(D @ self.a_solve(G @ q))

            gs_M = symmetric_gauss_seidel(neg_M_hat, cfg.gs_sweeps)
            interval = _chebyshev_interval(neg_schur, gs_M, level.n_p, cfg, f"Schur complement on n={level.n}")
            neg_solve = Chebyshev(neg_schur, gs_M, cfg.cheby_iters_M, interval)

            def m_solve(y: np.ndarray) -> np.ndarray:
                return neg_solve(-y)

        self.m_solve = m_solve

    def apply(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        sys = self.system
        level = sys.level
        r = sys.residual_vector(x, b)
        r_u, r_p = r[level.u_slice], r[level.p_slice]
        y_u = self.a_solve(r_u)
        y_p = r_p + sys.D @ y_u
        x_p = self.m_solve(y_p)
        x_u = y_u - self.a_solve(sys.G @ x_p)
        return project_pressure_mean(x + np.concatenate([x_u, x_p]), level)


def sc_apply(sys: StokesIBLevelSystem, cfg: SCSmootherConfig, w: Vector, b: Vector) -> Vector:
    """One application of the Schur complement smoother."""
    x = SCSmoother(sys, cfg).apply(to_unknowns(sys, w), to_unknowns(sys, b))
    return like_input(sys, w, x)


@dataclass(frozen=True)
class SmootherWrap:
    """Inner smoother selection plus the FGMRES iterations wrapped around it.

    ``fgmres_iters = 0`` applies the inner smoother directly.
    """

    kind: str = "SC"
    box_size: int = 8
    overlap: int = 2
    fgmres_iters: int = 2
    sc: SCSmootherConfig = SCSmootherConfig()
    threads: Optional[int] = None
    _inner: weakref.WeakKeyDictionary = field(
        default_factory=weakref.WeakKeyDictionary, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        if self.kind not in SMOOTHER_KINDS:
            raise ValueError(f"unknown smoother '{self.kind}', expected one of {SMOOTHER_KINDS}")
        if self.fgmres_iters < 0:
            raise ValueError(f"fgmres_iters must be non-negative, got {self.fgmres_iters}")

    def inner(self, system: StokesIBLevelSystem):
        """Inner smoother of ``system``, built once and cached."""
        smoother = self._inner.get(system)
        if smoother is None:
            if self.kind == "SC":
                smoother = SCSmoother(system, self.sc)
            else:
                partition = partition_level(system, self.box_size, self.overlap)
                smoother = SchwarzSmoother(partition, multiplicative=self.kind == "RMS", threads=self.threads)
            self._inner[system] = smoother
        return smoother

    def setup(self, systems) -> None:
        """Build the inner smoothers of several levels ahead of time."""
        for system in systems:
            self.inner(system)


def smooth(wrap: SmootherWrap, sys: StokesIBLevelSystem, w: Vector, b: Vector, nu: int) -> Vector:
    """Run ``nu`` wrapped smoothing applications starting from ``w``."""
    if nu < 1:
        raise ValueError(f"the number of smoothing sweeps must be at least 1, got {nu}")
    inner = wrap.inner(sys)
    level = sys.level
    x = to_unknowns(sys, w).copy()
    b_vec = to_unknowns(sys, b)
    zero = np.zeros(sys.size)

    def precondition(v: np.ndarray) -> np.ndarray:
        return inner.apply(zero, v)

    def project(v: np.ndarray) -> np.ndarray:
        return project_pressure_mean(v, level)

    for _ in range(nu):
        if wrap.fgmres_iters == 0:
            x = inner.apply(x, b_vec)
        else:
            x = fgmres(
                sys.matvec, b_vec, x0=x, precondition=precondition, maxiter=wrap.fgmres_iters, project=project
            ).x
    return like_input(sys, w, x)
