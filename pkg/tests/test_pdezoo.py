"""
Test cases for the benchmark systems

"""
import logging
import unittest

import numpy as np

from phnn import app
from phnn.common.errors import ConfigError, ShapeError, UnsupportedError
from phnn.diffcore import finite_diff_gradient
from phnn.pdezoo import (
    INITIAL_CONDITIONS,
    SYSTEMS,
    default_grid,
    discrete_hamiltonian,
    discrete_lyapunov,
    external_force,
    ground_truth_rhs,
    sample_initial_condition,
    system_spec,
)
from phnn.integrate import rollout
from phnn.spatial import PeriodicGrid, discrete_inner, stencil_apply


def spec_of(name, M=100, **overrides):
    """A system on its default period"""
    return system_spec(name, default_grid(name, M), overrides)


######################################################################
#  S Y S T E M   S P E C   T E S T   C A S E S
######################################################################
class TestSystemSpec(unittest.TestCase):
    """Test Cases for system_spec"""

    @classmethod
    def setUpClass(cls):
        """This runs once before the entire test suite"""
        app.logger.setLevel(logging.CRITICAL)

    def test_kdvburgers_defaults(self):
        """It should build KdV-Burgers with the central difference as S"""
        spec = spec_of("kdvburgers")
        h = spec.grid.h
        self.assertEqual(spec.grid.P, 20.0)
        self.assertEqual(spec.params, {"eta": 6.0, "nu": 0.3, "gamma": 1.0})
        np.testing.assert_allclose(spec.S_kernel.weights, [-1 / (2 * h), 0.0, 1 / (2 * h)])
        self.assertEqual(spec.S_kernel.constraint, "skew")
        self.assertEqual(spec.A_kernel.constraint, "identity")
        self.assertEqual(spec.R_kernel.constraint, "identity")
        self.assertEqual(tuple(spec.force_flags), (False, True, True))

    def test_bbm_defaults(self):
        """It should build BBM with A = 1 - second difference and no R"""
        spec = spec_of("bbm")
        h = spec.grid.h
        self.assertEqual(spec.grid.P, 50.0)
        self.assertEqual(spec.R_kernel.constraint, "zero")
        np.testing.assert_allclose(spec.A_kernel.weights, [-1 / h**2, 1 + 2 / h**2, -1 / h**2])

    def test_peronamalik_defaults(self):
        """It should build Perona-Malik with no S and identity R"""
        spec = spec_of("peronamalik")
        self.assertEqual(spec.grid.P, 6.0)
        self.assertEqual(spec.S_kernel.constraint, "zero")
        self.assertEqual(spec.R_kernel.constraint, "identity")

    def test_cahnhilliard_defaults(self):
        """It should build Cahn-Hilliard with R = minus the second difference"""
        spec = spec_of("cahnhilliard")
        h = spec.grid.h
        self.assertEqual(spec.params, {"nu": -1.0, "alpha": 1.0, "mu": -1e-3})
        np.testing.assert_allclose(spec.R_kernel.weights, [-1 / h**2, 2 / h**2, -1 / h**2])
        self.assertEqual(spec.R_kernel.constraint, "symmetric")

    def test_operator_constraints(self):
        """It should give every system a skew or zero S and symmetric A and R"""
        for name in SYSTEMS:
            spec = spec_of(name, M=20)
            self.assertIn(spec.S_kernel.constraint, ("skew", "zero"))
            self.assertIn(spec.A_kernel.constraint, ("symmetric", "identity"))
            self.assertIn(spec.R_kernel.constraint, ("symmetric", "identity", "zero"))

    def test_overrides(self):
        """It should apply parameter overrides and switch the force off"""
        spec = spec_of("kdvburgers", nu=0.0, force_enabled=False)
        self.assertEqual(spec.params["nu"], 0.0)
        self.assertFalse(spec.force_enabled)
        self.assertTrue(spec.without_force().params["nu"] == 0.0)

    def test_unknown(self):
        """It should refuse unknown systems and parameters"""
        grid = PeriodicGrid(10, 1.0)
        self.assertRaises(ConfigError, system_spec, "allencahn", grid)
        self.assertRaises(ConfigError, system_spec, "bbm", grid, {"nu": 1.0})
        self.assertRaises(ConfigError, default_grid, "heat")

    def test_shape_checked(self):
        """It should refuse states of the wrong length"""
        spec = spec_of("bbm", M=10)
        self.assertRaises(ShapeError, discrete_hamiltonian, spec, np.ones(11))


######################################################################
#  D I S C R E T E   I N T E G R A L   T E S T   C A S E S
######################################################################
class TestIntegrals(unittest.TestCase):
    """Test Cases for discrete_hamiltonian and discrete_lyapunov"""

    def test_kdvburgers_hamiltonian(self):
        """It should integrate -eta/6 over the period for u = 1"""
        self.assertAlmostEqual(discrete_hamiltonian(spec_of("kdvburgers"), np.ones(100)), -20.0, places=12)

    def test_bbm_hamiltonian(self):
        """It should give 100/3 for u = 1 on P = 50"""
        self.assertAlmostEqual(discrete_hamiltonian(spec_of("bbm"), np.ones(100)), 100.0 / 3.0, places=12)

    def test_zero_state(self):
        """It should give zero integrals at u = 0"""
        for name in SYSTEMS:
            spec = spec_of(name, M=20)
            self.assertEqual(discrete_hamiltonian(spec, np.zeros(20)), 0.0)
            self.assertEqual(discrete_lyapunov(spec, np.zeros(20)), 0.0)

    def test_lyapunov_examples(self):
        """It should evaluate the Lyapunov integrals on constants"""
        self.assertEqual(discrete_lyapunov(spec_of("peronamalik"), np.full(100, 3.0)), 0.0)
        self.assertAlmostEqual(discrete_lyapunov(spec_of("cahnhilliard"), np.ones(100)), -0.25, places=12)
        self.assertAlmostEqual(discrete_lyapunov(spec_of("kdvburgers"), np.full(100, -2.5)), 0.0, places=12)
        self.assertEqual(discrete_lyapunov(spec_of("bbm"), np.ones(100)), 0.0)

    def test_batched(self):
        """It should integrate each row of a batch"""
        spec = spec_of("bbm", M=10)
        values = discrete_hamiltonian(spec, np.stack([np.zeros(10), np.ones(10)]))
        np.testing.assert_allclose(values, [0.0, 100.0 / 3.0])

    def test_analytic_gradients(self):
        """It should match finite differences of the integrals"""
        rng = np.random.default_rng(0)
        for name in SYSTEMS:
            spec = spec_of(name, M=16)
            u = rng.normal(size=16)
            for integral, gradient in ((spec.hamiltonian, spec.grad_hamiltonian), (spec.lyapunov, spec.grad_lyapunov)):
                expected = finite_diff_gradient(integral, u)
                actual = gradient(u)
                scale = max(np.max(np.abs(expected)), 1e-12)
                self.assertLess(np.max(np.abs(actual - expected)) / scale, 1e-6, name)


######################################################################
#  R I G H T   H A N D   S I D E   T E S T   C A S E S
######################################################################
class TestRightHandSide(unittest.TestCase):
    """Test Cases for ground_truth_rhs and external_force"""

    def test_zero_state_without_force(self):
        """It should vanish at u = 0 without force"""
        for name in SYSTEMS:
            spec = spec_of(name, M=20, force_enabled=False)
            np.testing.assert_array_equal(ground_truth_rhs(spec, np.zeros(20)), np.zeros(20))

    def test_kdvburgers_constant(self):
        """It should vanish on constants for unforced KdV-Burgers"""
        spec = spec_of("kdvburgers", force_enabled=False)
        np.testing.assert_allclose(ground_truth_rhs(spec, np.full(100, 0.7)), 0.0, atol=1e-12)

    def test_peronamalik_force_only(self):
        """It should give exactly the force at u = 0"""
        spec = spec_of("peronamalik")
        expected = 10.0 * np.sin(4 * np.pi * spec.grid.x / 6.0)
        np.testing.assert_allclose(ground_truth_rhs(spec, np.zeros(100)), expected, atol=1e-12)

    def test_batch_times(self):
        """It should evaluate a batch of states at their own times"""
        spec = spec_of("kdvburgers", M=20)
        u = np.random.default_rng(1).normal(size=(3, 20))
        t = np.array([0.0, 0.5, 1.0])
        batch = ground_truth_rhs(spec, u, t)
        for row in range(3):
            np.testing.assert_allclose(batch[row], ground_truth_rhs(spec, u[row], t[row]))

    def test_conservation(self):
        """It should conserve H for inviscid, unforced KdV"""
        spec = spec_of("kdvburgers", M=50, nu=0.0, force_enabled=False)
        rng = np.random.default_rng(2)
        for _ in range(10):
            u = rng.normal(size=50)
            rate = discrete_inner(spec.grad_hamiltonian(u) / spec.grid.h, ground_truth_rhs(spec, u), spec.grid)
            self.assertAlmostEqual(rate, 0.0, delta=1e-11 * max(1.0, np.abs(u).max() ** 4))

    def test_dissipation(self):
        """It should dissipate V for unforced Perona-Malik and Cahn-Hilliard"""
        rng = np.random.default_rng(3)
        for name in ("peronamalik", "cahnhilliard"):
            spec = spec_of(name, M=30, force_enabled=False)
            for _ in range(100):
                grad = spec.grad_lyapunov(rng.normal(size=30)) / spec.grid.h
                form = discrete_inner(grad, stencil_apply(spec.R_kernel, grad), spec.grid)
                self.assertGreaterEqual(form, -1e-12)

    def test_stepwise_dissipation(self):
        """It should never raise V over 100 unforced reference solver steps"""
        for name, dt_data in (("peronamalik", 0.02), ("cahnhilliard", 0.004)):
            spec = spec_of(name, M=50, force_enabled=False)
            u0 = sample_initial_condition(spec, np.random.default_rng(4))
            trajectory = rollout(spec.vector_field(), u0, 0.0, dt_data / spec.substeps, 100, "midpoint")
            values = [discrete_lyapunov(spec, u) for u in trajectory.states]
            for n in range(100):
                self.assertLessEqual(values[n + 1], values[n] + 1e-8, f"{name} step {n}")

    def test_forces(self):
        """It should evaluate the external forces"""
        kdv = spec_of("kdvburgers")
        self.assertEqual(external_force(kdv, np.zeros(100), t=0.0)[0], 0.0)
        bbm = spec_of("bbm")
        np.testing.assert_allclose(external_force(bbm, np.ones(100), t=np.pi / 2), 0.1)
        ch = spec_of("cahnhilliard")
        force = external_force(ch, np.ones(100))
        inside = (ch.grid.x > 0.3) & (ch.grid.x < 0.7)
        np.testing.assert_array_equal(force[inside], 30.0)
        np.testing.assert_array_equal(force[~inside], 0.0)

    def test_force_switched_off(self):
        """It should give a zero force when switched off"""
        spec = spec_of("peronamalik", force_enabled=False)
        np.testing.assert_array_equal(external_force(spec, np.ones(100)), np.zeros(100))


######################################################################
#  I N I T I A L   C O N D I T I O N   T E S T   C A S E S
######################################################################
class TestInitialConditions(unittest.TestCase):
    """Test Cases for the initial state samplers"""

    def test_deterministic(self):
        """It should draw the same state from the same seed"""
        for name in SYSTEMS:
            spec = spec_of(name, M=32)
            first = sample_initial_condition(spec, np.random.default_rng(5))
            second = sample_initial_condition(spec, np.random.default_rng(5))
            np.testing.assert_array_equal(first, second)
            self.assertEqual(first.shape, (32,))

    def test_kdvburgers_peak(self):
        """It should put two unit solitons on top of each other at P/2"""
        spec = spec_of("kdvburgers")
        u = spec.ic.profile(spec.grid, {"c": (1.0, 1.0), "d": (0.5, 0.5)})
        x = spec.grid.x
        z = np.mod(x + 10.0 - 10.0, 20.0) - 10.0
        np.testing.assert_allclose(u, 4.0 / np.cosh(z) ** 2, rtol=1e-14)
        self.assertAlmostEqual(u[50], 4.0, places=14)

    def test_zero_profiles(self):
        """It should give flat BBM and Cahn-Hilliard profiles for degenerate parameters"""
        bbm = spec_of("bbm")
        np.testing.assert_array_equal(bbm.ic.profile(bbm.grid, {"c": (1.0, 1.0), "d": (0.2, 0.7)}), 0.0)
        ch = spec_of("cahnhilliard")
        params = {"a": (0.0, 0.0), "b": (0.0, 0.0), "c": (2.0, 3.0), "d": (1.0, 4.0)}
        np.testing.assert_array_equal(ch.ic.profile(ch.grid, params), 0.0)

    def test_periodic_profiles(self):
        """It should evaluate to the same value at 0 and P"""
        rng = np.random.default_rng(6)
        for name in ("kdvburgers", "bbm"):
            spec = spec_of(name)
            params = spec.ic.draw(rng)
            ends = spec.ic.profile(spec.grid, params, x=[0.0, spec.grid.P])
            self.assertAlmostEqual(ends[0], ends[1], places=9)

    def test_kdvburgers_amplitude_bound(self):
        """It should keep KdV-Burgers samples below 16"""
        spec = spec_of("kdvburgers", M=50)
        rng = np.random.default_rng(7)
        peak = max(np.max(sample_initial_condition(spec, rng)) for _ in range(10000))
        self.assertLessEqual(peak, 16.0 + 1e-9)

    def test_showcase(self):
        """It should provide showcase states for Perona-Malik and Cahn-Hilliard only"""
        for name in ("peronamalik", "cahnhilliard"):
            spec = spec_of(name, M=40)
            self.assertEqual(spec.ic.showcase_profile(spec.grid).shape, (40,))
        kdv = spec_of("kdvburgers", M=40)
        self.assertRaises(UnsupportedError, kdv.ic.showcase_profile, kdv.grid)
        self.assertIsNone(INITIAL_CONDITIONS["bbm"].showcase)
