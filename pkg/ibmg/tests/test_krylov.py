import numpy as np
from django.test import SimpleTestCase

from ibmg.solver.grid import BlockVector
from ibmg.solver.krylov import (StepState, default_time_step,
                                semi_implicit_step, solve)
from ibmg.solver.operators import CavityBC, FluidParams
from ibmg.solver.smoothers import SmootherWrap
from ibmg.solver.structure import (flatten_positions, make_structures,
                                   make_suspension, make_thin_membrane)
from ibmg.solver.system import build_hierarchy_systems
from ibmg.tests import oracle
from ibmg.tests.test_smoothers import random_rhs
from ibmg.tests.test_system import membrane_system


class DefaultsTest(SimpleTestCase):
    def test_time_step(self):
        self.assertAlmostEqual(default_time_step(64), 0.005, places=15)


class SolveTest(SimpleTestCase):
    def setUp(self):
        self.hier = build_hierarchy_systems(membrane_system(16, gamma=5.0))
        self.b = BlockVector.from_array(self.hier.finest.level, random_rhs(self.hier.finest, seed=0))

    def test_converges_with_every_smoother(self):
        for kind in ("RAS", "RMS", "SC"):
            wrap = SmootherWrap(kind=kind, box_size=8, overlap=2)
            w, report = solve(self.hier, wrap, self.b, tol=1e-10, max_iters=100)
            self.assertTrue(report.converged, kind)
            self.assertEqual(report.iterations, len(report.residual_history) - 1)
            self.assertEqual(report.residual_history[0], 1.0)
            true_relres = np.linalg.norm(self.hier.finest.residual_vector(w.to_array(), self.b.to_array()))
            self.assertLess(true_relres / np.linalg.norm(self.b.to_array()), 1e-9, kind)
            self.assertAlmostEqual(w.p.mean(), 0.0, places=12)

    def test_history_non_increasing(self):
        _, report = solve(self.hier, SmootherWrap(kind="SC"), self.b, tol=1e-10)
        history = report.residual_history
        self.assertTrue(all(b <= a * (1 + 1e-12) for a, b in zip(history, history[1:])))

    def test_iteration_cap(self):
        _, report = solve(self.hier, SmootherWrap(kind="RAS", box_size=8, overlap=0), self.b, tol=1e-30, max_iters=3)
        self.assertFalse(report.converged)
        self.assertEqual(report.iterations, 3)
        self.assertEqual(len(report.residual_history), 4)

    def test_callback_and_config_echo(self):
        seen = []
        _, report = solve(
            self.hier,
            SmootherWrap(kind="SC"),
            self.b,
            tol=1e-8,
            callback=lambda k, relres: seen.append(relres),
            config={"smoother": "SC"},
        )
        self.assertEqual(seen, report.residual_history[1:])
        self.assertEqual(report.config, {"smoother": "SC"})
        self.assertGreater(report.wall_time, 0.0)

    def test_zero_rhs(self):
        w, report = solve(self.hier, SmootherWrap(), BlockVector.zeros(self.hier.finest.level))
        self.assertTrue(report.converged)
        self.assertEqual(report.iterations, 0)
        self.assertFalse(w.to_array().any())

    def test_deterministic(self):
        wrap = SmootherWrap(kind="RAS", box_size=8, overlap=2, threads=1)
        _, first = solve(self.hier, wrap, self.b, tol=1e-10)
        _, second = solve(self.hier, SmootherWrap(kind="RAS", box_size=8, overlap=2, threads=4), self.b, tol=1e-10)
        self.assertEqual(first.residual_history, second.residual_history)


class StepTest(SimpleTestCase):
    def test_no_forcing_stays_at_rest(self):
        meshes = [make_thin_membrane(16, gamma=0.0)]
        step = semi_implicit_step(
            StepState(u=None, meshes=meshes),
            FluidParams(mu=1.0, dt=default_time_step(16)),
            16,
            SmootherWrap(kind="SC"),
            bc=CavityBC(lid_speed=0.0),
        )
        self.assertTrue(step.report.converged)
        self.assertFalse(step.u[0].any() or step.u[1].any() or step.p.any())
        np.testing.assert_array_equal(step.meshes[0].X, meshes[0].X)

    def test_structure_follows_interpolated_velocity(self):
        meshes = [make_thin_membrane(16, gamma=5.0)]
        params = FluidParams(mu=1.0, dt=default_time_step(16))
        step = semi_implicit_step(StepState(u=None, meshes=meshes), params, 16, SmootherWrap(kind="SC"), tol=1e-10)
        X0 = flatten_positions(meshes)
        expected = X0 + params.dt * (step.coupling.J @ step.hierarchy.finest.level.velocity_to_array(*step.u))
        np.testing.assert_allclose(flatten_positions(step.meshes), expected, rtol=1e-14)
        self.assertEqual(step.meshes[0].alpha, meshes[0].alpha)

    def test_lid_drives_flow(self):
        meshes = make_suspension(16, seed=0, n_structures=2)
        step = semi_implicit_step(
            StepState(u=None, meshes=meshes), FluidParams(mu=1.0, dt=default_time_step(16)), 16, SmootherWrap(kind="RAS")
        )
        self.assertTrue(step.report.converged)
        # the top row moves with the lid
        self.assertGreater(step.u[0][1:-1, -1].mean(), 0.0)

    def test_unconverged_step_is_returned_even_if_nodes_escape(self):
        meshes = [make_thin_membrane(16, gamma=5.0)]
        with self.assertLogs("ibmg.solver.krylov", "WARNING") as logs:
            step = semi_implicit_step(
                StepState(u=None, meshes=meshes),
                FluidParams(mu=1.0, dt=default_time_step(16)),
                16,
                SmootherWrap(kind="SC"),
                bc=CavityBC(lid_speed=1e6),
                tol=1e-30,
                max_iters=1,
            )
        self.assertFalse(step.report.converged)
        self.assertEqual(step.report.iterations, 1)
        moved = step.meshes[0]
        self.assertFalse(moved.confined)
        self.assertFalse(moved.inside_domain(moved.X))
        self.assertTrue(any("left the unit square" in line for line in logs.output))


class EliminationTest(SimpleTestCase):
    """The reduced solve agrees with a direct solve of the unreduced fluid-structure system."""

    def assertMatchesUnreduced(self, N, meshes, mu=1.0, rho=0.0):
        params = FluidParams(mu=mu, dt=default_time_step(N), rho=rho)
        step = semi_implicit_step(
            StepState(u=None, meshes=meshes), params, N, SmootherWrap(kind="SC"), tol=1e-13, max_iters=100
        )
        M, _, _ = oracle.dense_assemble_eq10(N, mu, rho, params.dt, meshes)
        X0 = flatten_positions(meshes)
        rhs = np.concatenate([oracle.dense_lid_rhs(N, mu, CavityBC().lid_profile), np.zeros(N * N), X0 / params.dt])
        dense = oracle.dense_solve(M, rhs, oracle.pressure_null_vector(N, extra=X0.size))

        level = step.hierarchy.finest.level
        u = level.velocity_to_array(*step.u)
        n_u = oracle.n_u(N)
        for name, actual, expected in (
            ("u", u, dense[:n_u]),
            ("p", step.p.ravel(), dense[n_u:oracle.n_total(N)]),
            ("X", flatten_positions(step.meshes), dense[oracle.n_total(N):]),
        ):
            scale = np.abs(expected).max()
            self.assertLess(np.abs(actual - expected).max(), 1e-10 * scale, name)

    def test_thin_membrane(self):
        self.assertMatchesUnreduced(16, [make_thin_membrane(16, gamma=5.0)])

    def test_suspension(self):
        self.assertMatchesUnreduced(16, make_suspension(16, seed=3, gamma=5.0, n_structures=2))

    def test_thick_shell(self):
        self.assertMatchesUnreduced(32, make_structures("thick", 32, gamma=5.0))

    def test_with_inertia(self):
        self.assertMatchesUnreduced(16, [make_thin_membrane(16, gamma=5.0)], mu=0.1, rho=1.0)
