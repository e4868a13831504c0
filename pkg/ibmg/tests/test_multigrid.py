import numpy as np
from django.test import SimpleTestCase

from ibmg.solver.grid import BlockVector
from ibmg.solver.multigrid import coarse_solve, v_cycle
from ibmg.solver.smoothers import SmootherWrap
from ibmg.solver.system import build_hierarchy_systems
from ibmg.tests import oracle
from ibmg.tests.test_smoothers import random_rhs, relres
from ibmg.tests.test_system import membrane_system


class CoarseSolveTest(SimpleTestCase):
    def setUp(self):
        self.system = membrane_system(8, gamma=5.0)

    def test_solves_projected_system(self):
        b = random_rhs(self.system, seed=0)
        x = coarse_solve(self.system, b)
        self.assertLess(relres(self.system, x, b), 1e-10)
        self.assertAlmostEqual(x[self.system.level.p_slice].mean(), 0.0, places=12)

    def test_matches_dense_solve(self):
        b = random_rhs(self.system, seed=1)
        L = oracle.dense_assemble_LIB(8, 1.0, 0.0, self.system.dt, self.system.E.toarray())
        expected = oracle.dense_solve(L, b, oracle.pressure_null_vector(8))
        np.testing.assert_allclose(coarse_solve(self.system, b), expected, rtol=1e-9, atol=1e-9 * np.abs(expected).max())

    def test_pressure_mean_of_rhs_ignored(self):
        b = random_rhs(self.system, seed=2)
        shifted = b.copy()
        shifted[self.system.level.p_slice] += 3.0
        np.testing.assert_allclose(coarse_solve(self.system, shifted), coarse_solve(self.system, b), rtol=1e-10, atol=1e-12)

    def test_block_vector(self):
        b = BlockVector.from_array(self.system.level, random_rhs(self.system))
        self.assertIsInstance(coarse_solve(self.system, b), BlockVector)


class VCycleTest(SimpleTestCase):
    def test_single_level_is_coarse_solve(self):
        system = membrane_system(8)
        hier = build_hierarchy_systems(system)
        self.assertEqual(hier.n_levels, 1)
        b = random_rhs(system, seed=3)
        np.testing.assert_array_equal(
            v_cycle(hier, SmootherWrap(kind="RAS"), np.zeros(system.size), b), coarse_solve(system, b)
        )

    def test_invalid_smoothing_counts(self):
        hier = build_hierarchy_systems(membrane_system(16))
        x = np.zeros(hier.finest.size)
        for nu1, nu2 in ((0, 0), (-1, 2), (1, -1)):
            with self.assertRaises(ValueError):
                v_cycle(hier, SmootherWrap(), x, x, nu1, nu2)

    def test_linear_without_wrap(self):
        hier = build_hierarchy_systems(membrane_system(32, gamma=5.0))
        size = hier.finest.size
        b1 = random_rhs(hier.finest, seed=4)
        b2 = random_rhs(hier.finest, seed=5)
        zero = np.zeros(size)
        for kind in ("RAS", "RMS", "SC"):
            wrap = SmootherWrap(kind=kind, box_size=8, overlap=2, fgmres_iters=0)
            combined = v_cycle(hier, wrap, zero, 2.0 * b1 - b2)
            separate = 2.0 * v_cycle(hier, wrap, zero, b1) - v_cycle(hier, wrap, zero, b2)
            np.testing.assert_allclose(combined, separate, rtol=1e-9, atol=1e-9 * np.abs(combined).max(), err_msg=kind)

    def test_exact_smoothers_solve_in_one_cycle(self):
        hier = build_hierarchy_systems(membrane_system(16, gamma=5.0))
        b = random_rhs(hier.finest, seed=8)
        # one box per level makes every smoothing step a direct solve
        wrap = SmootherWrap(kind="RAS", box_size=1024, overlap=0, fgmres_iters=0)
        x = v_cycle(hier, wrap, np.zeros(hier.finest.size), b)
        self.assertLess(relres(hier.finest, x, b), 1e-10)

    def test_affine_in_initial_guess(self):
        hier = build_hierarchy_systems(membrane_system(32, gamma=5.0))
        b = random_rhs(hier.finest, seed=9)
        x1 = random_rhs(hier.finest, seed=10)
        x2 = random_rhs(hier.finest, seed=11)
        for kind in ("RAS", "RMS", "SC"):
            wrap = SmootherWrap(kind=kind, box_size=8, overlap=2, fgmres_iters=0)
            base = v_cycle(hier, wrap, np.zeros(hier.finest.size), b)
            combined = v_cycle(hier, wrap, x1 + x2, b) - base
            separate = (v_cycle(hier, wrap, x1, b) - base) + (v_cycle(hier, wrap, x2, b) - base)
            np.testing.assert_allclose(combined, separate, rtol=1e-9, atol=1e-9 * np.abs(combined).max(), err_msg=kind)

    def test_pre_or_post_smoothing_only(self):
        hier = build_hierarchy_systems(membrane_system(16))
        b = random_rhs(hier.finest, seed=6)
        wrap = SmootherWrap(kind="RAS", box_size=8, overlap=2)
        for nu1, nu2 in ((1, 0), (0, 1)):
            x = v_cycle(hier, wrap, np.zeros(hier.finest.size), b, nu1, nu2)
            self.assertTrue(np.all(np.isfinite(x)))

    def test_cycle_reduces_residual(self):
        hier = build_hierarchy_systems(membrane_system(32, gamma=5.0))
        b = random_rhs(hier.finest, seed=7)
        wrap = SmootherWrap(kind="RAS", box_size=8, overlap=2, fgmres_iters=2)
        x = v_cycle(hier, wrap, np.zeros(hier.finest.size), b)
        self.assertLess(relres(hier.finest, x, b), 1.0)
