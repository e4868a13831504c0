import os
from unittest.mock import patch

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from django.test import SimpleTestCase

from ibmg.solver.grid import BlockVector, build_hierarchy, project_pressure_mean
from ibmg.solver.multigrid import coarse_solve
from ibmg.solver.operators import FluidParams
from ibmg.solver.smoothers import (Chebyshev, PartitionError, SchwarzSmoother,
                                   SCSmoother, SCSmootherConfig, Subdomain,
                                   SmootherWrap, _chebyshev_interval,
                                   _factorize, default_threads,
                                   estimate_lambda_max, partition_level,
                                   ras_apply, rms_apply, sc_apply, smooth,
                                   symmetric_gauss_seidel)
from ibmg.solver.system import StokesIBLevelSystem
from ibmg.tests.test_system import membrane_system, structure_system


def random_rhs(system, seed=0):
    b = np.random.default_rng(seed).standard_normal(system.size)
    return project_pressure_mean(b, system.level)


def relres(system, x, b):
    return np.linalg.norm(system.residual_vector(x, b)) / np.linalg.norm(b)


def schwarz_oracle(partition, x, b, multiplicative):
    """Restricted Schwarz sweep with dense local solves."""
    L = partition.system.L.toarray()
    x = x.copy()
    r = b - L @ x
    updates = []
    for sub in partition:
        block = L[np.ix_(sub.dofs, sub.dofs)]
        delta = np.linalg.solve(block, r[sub.dofs])[sub.restricted_local]
        if multiplicative:
            x[sub.restricted] += delta
            r = b - L @ x
        else:
            updates.append((sub.restricted, delta))
    for restricted, delta in updates:
        x[restricted] += delta
    return project_pressure_mean(x, partition.level)


class PartitionTest(SimpleTestCase):
    def test_single_box_covers_level(self):
        system = membrane_system(8)
        partition = partition_level(system, box_size=8, overlap=0)
        self.assertEqual(len(partition), 1)
        sub = partition.subdomains[0]
        self.assertEqual(sub.cells, (0, 8, 0, 8))
        np.testing.assert_array_equal(sub.dofs, np.arange(system.size))
        self.assertTrue(sub.bordered)

    def test_box_larger_than_level_is_clipped(self):
        partition = partition_level(membrane_system(8), box_size=32, overlap=2)
        self.assertEqual(partition.box_size, 8)
        self.assertEqual(len(partition), 1)

    def test_overlapping_boxes(self):
        partition = partition_level(membrane_system(16), box_size=8, overlap=2)
        self.assertEqual(len(partition), 4)
        self.assertEqual(
            [sub.cells for sub in partition],
            [(0, 10, 0, 10), (0, 10, 6, 16), (6, 16, 0, 10), (6, 16, 6, 16)],
        )
        for sub in partition:
            self.assertFalse(sub.bordered)
            self.assertTrue(np.all(np.diff(sub.dofs) > 0))

    def test_restricted_sets_partition_unknowns(self):
        system = membrane_system(16)
        for overlap in (0, 1, 2):
            partition = partition_level(system, box_size=8, overlap=overlap)
            restricted = np.concatenate([sub.restricted for sub in partition])
            self.assertEqual(restricted.size, system.size)
            np.testing.assert_array_equal(np.sort(restricted), np.arange(system.size))
            for sub in partition:
                np.testing.assert_array_equal(sub.dofs[sub.restricted_local], sub.restricted)

    def test_invalid_layouts(self):
        system = membrane_system(16)
        for box, overlap in ((0, 1), (3, 1), (8, -1)):
            with self.assertRaises(PartitionError):
                partition_level(system, box, overlap)

    def test_partition_of_other_system_rejected(self):
        partition = partition_level(membrane_system(8), 8, 0)
        other = membrane_system(8)
        with self.assertRaises(PartitionError):
            ras_apply(partition, other, np.zeros(other.size), np.ones(other.size))

    def test_stiff_boxes_factorized_without_bordering(self):
        system = membrane_system(32, gamma=500.0, params=FluidParams(mu=0.01, dt=0.01, rho=1.0))
        with self.assertLogs("ibmg.solver.smoothers", "DEBUG") as logs:
            partition = partition_level(system, box_size=8, overlap=2)
        self.assertFalse(any("singular" in line for line in logs.output))
        L = system.L
        rng = np.random.default_rng(14)
        for sub in partition:
            self.assertFalse(sub.bordered, sub.box)
            block = L[sub.dofs][:, sub.dofs]
            r = rng.standard_normal(sub.dofs.size)
            x = sub.solve(r)
            self.assertLess(np.linalg.norm(block @ x - r), 1e-11 * spla.norm(block) * np.linalg.norm(x), sub.box)

    def test_singular_block_falls_back_to_bordering(self):
        sub = Subdomain(
            box=(0, 0), cells=(0, 1, 0, 1), dofs=np.arange(2), restricted=np.arange(2), restricted_local=np.arange(2)
        )
        # the pressure unknown is decoupled from the velocity
        block = sp.csc_matrix(np.diag([2.0, 0.0]))
        with self.assertLogs("ibmg.solver.smoothers", "WARNING"):
            _factorize(sub, block, np.array([False, True]), covers_all_pressure=False)
        self.assertTrue(sub.bordered)
        np.testing.assert_allclose(sub.solve(np.array([4.0, 0.0])), [2.0, 0.0])


class SchwarzTest(SimpleTestCase):
    def test_whole_domain_box_solves_exactly(self):
        system = membrane_system(8, gamma=5.0)
        b = random_rhs(system)
        partition = partition_level(system, box_size=8, overlap=0)
        x = ras_apply(partition, system, np.zeros(system.size), b)
        np.testing.assert_allclose(x, coarse_solve(system, b), rtol=1e-9, atol=1e-9 * np.abs(x).max())
        self.assertLess(relres(system, x, b), 1e-10)

    def test_single_box_multiplicative_equals_additive(self):
        system = membrane_system(8)
        b = random_rhs(system, seed=1)
        partition = partition_level(system, box_size=8, overlap=0)
        x0 = random_rhs(system, seed=2)
        np.testing.assert_allclose(
            rms_apply(partition, system, x0, b), ras_apply(partition, system, x0, b), rtol=1e-10, atol=1e-10
        )

    def test_additive_matches_dense_sweep(self):
        system = membrane_system(16, gamma=5.0)
        b = random_rhs(system, seed=3)
        x0 = random_rhs(system, seed=4)
        for overlap in (0, 2):
            partition = partition_level(system, box_size=8, overlap=overlap)
            expected = schwarz_oracle(partition, x0, b, multiplicative=False)
            np.testing.assert_allclose(ras_apply(partition, system, x0, b), expected, rtol=1e-8, atol=1e-8)

    def test_multiplicative_matches_dense_sweep(self):
        system = membrane_system(16, gamma=5.0)
        b = random_rhs(system, seed=5)
        partition = partition_level(system, box_size=8, overlap=2)
        expected = schwarz_oracle(partition, np.zeros(system.size), b, multiplicative=True)
        np.testing.assert_allclose(
            rms_apply(partition, system, np.zeros(system.size), b), expected, rtol=1e-8, atol=1e-8
        )

    def test_threads_do_not_change_result(self):
        system = membrane_system(16)
        b = random_rhs(system, seed=6)
        partition = partition_level(system, box_size=8, overlap=1)
        x = np.zeros(system.size)
        np.testing.assert_array_equal(
            ras_apply(partition, system, x, b, threads=1), ras_apply(partition, system, x, b, threads=4)
        )

    def test_block_vectors_in_and_out(self):
        system = membrane_system(8)
        b = BlockVector.from_array(system.level, random_rhs(system))
        partition = partition_level(system, 8, 0)
        w = ras_apply(partition, system, BlockVector.zeros(system.level), b)
        self.assertIsInstance(w, BlockVector)


class SchurComplementTest(SimpleTestCase):
    def setUp(self):
        self.system = membrane_system(16, gamma=5.0)
        A = self.system.A_IB.toarray()
        G, D = self.system.G.toarray(), self.system.D.toarray()
        A_inv = np.linalg.inv(A)
        M_pinv = np.linalg.pinv(D @ A_inv @ G)
        self.exact = SCSmoother(self.system, a_solve=lambda r: A_inv @ r, m_solve=lambda y: M_pinv @ y)

    def test_exact_inverses_solve_in_one_application(self):
        b = random_rhs(self.system, seed=7)
        x = self.exact.apply(np.zeros(self.system.size), b)
        self.assertLess(relres(self.system, x, b), 1e-10)
        self.assertAlmostEqual(x[self.system.level.p_slice].mean(), 0.0, places=12)

    def test_correction_from_nonzero_guess(self):
        b = random_rhs(self.system, seed=8)
        x0 = random_rhs(self.system, seed=9)
        x = self.exact.apply(x0, b)
        self.assertLess(relres(self.system, x, b), 1e-9)

    def test_chebyshev_smoother_reduces_residual(self):
        system = membrane_system(16, gamma=5.0)
        b = random_rhs(system, seed=10)
        smoother = SCSmoother(system, SCSmootherConfig(cheby_iters_A=4, cheby_iters_M=4))
        x = smoother.apply(np.zeros(system.size), b)
        self.assertTrue(np.all(np.isfinite(x)))
        self.assertLess(relres(system, x, b), 1.0)

    def test_sc_apply_matches_smoother(self):
        system = membrane_system(16, gamma=5.0)
        b = random_rhs(system, seed=11)
        cfg = SCSmootherConfig()
        expected = SCSmoother(system, cfg).apply(np.zeros(system.size), b)
        level = system.level
        w = BlockVector.zeros(level)
        out = sc_apply(system, cfg, w, BlockVector.from_array(level, b))
        self.assertIsInstance(out, BlockVector)
        np.testing.assert_allclose(out.to_array(), expected, rtol=1e-12, atol=1e-14)

    def test_velocity_block_approximation_positive_definite(self):
        system = membrane_system(16, gamma=500.0, params=FluidParams(mu=0.01, dt=0.02, rho=1.0))
        smoother = SCSmoother(system)
        self.assertGreaterEqual(smoother.a_solve.lambda_max, 1.0)
        B = np.column_stack([smoother.a_solve(e) for e in np.eye(system.level.n_u)])
        np.testing.assert_allclose(B, B.T, rtol=0, atol=1e-10 * np.abs(B).max())
        self.assertGreater(np.linalg.eigvalsh(0.5 * (B + B.T)).min(), 0.0)

    def test_failed_estimates_fall_back_with_warning(self):
        with patch("ibmg.solver.smoothers.estimate_lambda_max", return_value=None):
            with self.assertLogs("ibmg.solver.smoothers", "WARNING") as logs:
                smoother = SCSmoother(membrane_system(8))
        self.assertEqual(sum("fallback interval" in line for line in logs.output), 2)
        self.assertAlmostEqual(smoother.a_solve.lambda_min, 0.1)
        self.assertAlmostEqual(smoother.a_solve.lambda_max, 1.1)

    def test_config_validation(self):
        with self.assertRaises(ValueError):
            SCSmootherConfig(cheby_iters_A=0)
        with self.assertRaises(ValueError):
            SCSmootherConfig(gs_sweeps=0)


class ChebyshevTest(SimpleTestCase):
    def setUp(self):
        self.diag = np.arange(1.0, 11.0)
        self.op = lambda v: self.diag * v
        self.identity = lambda v: v.copy()

    def test_power_iteration(self):
        lam = estimate_lambda_max(self.op, self.identity, 10, iterations=300, seed=1)
        self.assertAlmostEqual(lam, 10.0, places=4)

    def test_power_iteration_failure(self):
        self.assertIsNone(estimate_lambda_max(lambda v: 0.0 * v, self.identity, 10))

    def test_converges_with_exact_interval(self):
        b = np.ones(10)
        x = Chebyshev(self.op, self.identity, 60, (1.0, 10.0))(b)
        np.testing.assert_allclose(x, b / self.diag, rtol=1e-8)

    def test_single_iteration_is_scaled_preconditioner(self):
        b = np.ones(10)
        np.testing.assert_allclose(Chebyshev(self.op, self.identity, 1, (1.0, 9.0))(b), b / 5.0)

    def test_known_bound_extends_interval(self):
        scaled = lambda v: 0.2 * v  # noqa: E731
        cfg = SCSmootherConfig()
        lower, upper = _chebyshev_interval(scaled, self.identity, 10, cfg, "scaled identity")
        self.assertAlmostEqual(upper, 0.22)
        lower, upper = _chebyshev_interval(scaled, self.identity, 10, cfg, "scaled identity", bound=1.0)
        self.assertAlmostEqual(upper, 1.0)
        self.assertAlmostEqual(lower, 0.1 / 1.1)

    def test_gauss_seidel_on_diagonal_matrix(self):
        B = sp.diags(self.diag, format="csr")
        np.testing.assert_allclose(symmetric_gauss_seidel(B)(np.ones(10)), 1.0 / self.diag, rtol=1e-15)


class SmoothTest(SimpleTestCase):
    def test_wrap_validation(self):
        with self.assertRaises(ValueError):
            SmootherWrap(kind="Jacobi")
        with self.assertRaises(ValueError):
            SmootherWrap(fgmres_iters=-1)

    def test_zero_sweeps_rejected(self):
        system = membrane_system(8)
        with self.assertRaises(ValueError):
            smooth(SmootherWrap(kind="RAS"), system, np.zeros(system.size), np.ones(system.size), 0)

    def test_inner_smoother_cached_per_system(self):
        system = membrane_system(16)
        wrap = SmootherWrap(kind="RAS", box_size=8, overlap=1)
        self.assertIs(wrap.inner(system), wrap.inner(system))
        self.assertIsNot(wrap.inner(system), wrap.inner(membrane_system(16)))

    def test_wrapped_residual_non_increasing(self):
        system = membrane_system(16, gamma=5.0)
        b = random_rhs(system, seed=11)
        for kind in ("RAS", "RMS", "SC"):
            wrap = SmootherWrap(kind=kind, box_size=8, overlap=2, fgmres_iters=2)
            x = np.zeros(system.size)
            previous = relres(system, x, b)
            for _ in range(3):
                x = smooth(wrap, system, x, b, 1)
                current = relres(system, x, b)
                self.assertLessEqual(current, previous * (1.0 + 1e-10), kind)
                previous = current

    def test_checkerboard_error_damped(self):
        N = 64
        level = build_hierarchy(N).finest
        system = StokesIBLevelSystem(level, FluidParams(mu=1.0, dt=0.32 / N))
        u1 = np.fromfunction(lambda i, j: (-1.0) ** (i + j), level.u1_shape)
        u2 = np.fromfunction(lambda i, j: (-1.0) ** (i + j), level.u2_shape)
        e0 = np.concatenate([level.velocity_to_array(u1, u2), np.zeros(level.n_p)])
        zero = np.zeros(level.size)
        for kind in ("RAS", "RMS", "SC"):
            wrap = SmootherWrap(kind=kind, box_size=8, overlap=2, fgmres_iters=0)
            e = smooth(wrap, system, e0, zero, 2)
            coefficient = (e @ e0) / (e0 @ e0)
            self.assertLess(coefficient ** 2, 0.5, kind)

    def test_multiplicative_error_not_larger_than_additive(self):
        system = structure_system("thick", 64, gamma=500.0)
        e0 = random_rhs(system, seed=13)
        zero = np.zeros(system.size)
        errors = {}
        for kind in ("RAS", "RMS"):
            wrap = SmootherWrap(kind=kind, box_size=8, overlap=2, fgmres_iters=0)
            errors[kind] = np.linalg.norm(smooth(wrap, system, e0, zero, 2))
        self.assertLessEqual(errors["RMS"], errors["RAS"])

    def test_threads_default_to_serial(self):
        partition = partition_level(membrane_system(16), box_size=8, overlap=1)
        with patch.dict(os.environ, {"IBMG_THREADS": "8"}):
            self.assertEqual(default_threads(), 1)
            self.assertEqual(SchwarzSmoother(partition).threads, 1)
        self.assertEqual(SchwarzSmoother(partition, threads=4).threads, 4)

    def test_unwrapped_is_inner_application(self):
        system = membrane_system(16)
        b = random_rhs(system, seed=12)
        wrap = SmootherWrap(kind="RAS", box_size=8, overlap=2, fgmres_iters=0)
        x0 = np.zeros(system.size)
        np.testing.assert_array_equal(smooth(wrap, system, x0, b, 1), wrap.inner(system).apply(x0, b))
