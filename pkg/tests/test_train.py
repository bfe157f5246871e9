"""
Test cases for the training loss, the optimizer and the training loop

"""
import logging
import unittest
from dataclasses import replace

import numpy as np

from phnn import app
from phnn.common.errors import ConfigError, ShapeError
from phnn.integrate import Sample
from phnn.models import ModelBase, PHNNModel, build_model, build_phnn
from phnn.pdezoo import default_grid, system_spec
from phnn.spatial import make_grid
from phnn.train import (
    Adam,
    LossGraph,
    TrainConfig,
    TrainReport,
    ValidationSet,
    loss,
    train,
    train_ensemble,
    validate,
)
from tests.factories import SyntheticDatasetFactory, TrainConfigFactory

SMALL = (4, 8, 8)


class ScalingModel(ModelBase):
    """u' = theta u with a single trainable theta"""

    kind = "scaling"

    def __init__(self, grid, theta=0.0):
        super().__init__(grid, "baseline")
        self.params.add("theta", np.array([float(theta)]))

    @property
    def label(self):
        return "Scaling"

    def emit_terms(self, tape, u, t, xfeat):
        return {"rhs": tape.stencil(u, tape.param("theta"))}

    def serialize(self):
        return {"kind": self.kind, "theta": float(self.params.get("theta")[0])}


class ShiftModel(ModelBase):
    """u' = c for a fixed vector c"""

    kind = "shift"

    def __init__(self, grid, c):
        super().__init__(grid, "baseline")
        self.params.add("c", np.asarray(c, dtype=float), trainable=False)

    def emit_terms(self, tape, u, t, xfeat):
        return {"rhs": tape.fill_like(u, 0.0) + tape.param("c")}

    def serialize(self):
        return {"kind": self.kind}


class FixedField:
    """Stand-in model wrapping a known vector field"""

    def __init__(self, field):
        self.field = field

    def vector_field(self):
        return self.field


def midpoint_optimum(dt):
    """Minimizer of the midpoint loss for exponentially decaying data"""
    return -(2.0 / dt) * np.tanh(dt / 2.0)


######################################################################
#  L O S S   T E S T   C A S E S
######################################################################
class TestLoss(unittest.TestCase):
    """Test Cases for loss"""

    @classmethod
    def setUpClass(cls):
        """This runs once before the entire test suite"""
        app.logger.setLevel(logging.CRITICAL)

    def setUp(self):
        """This runs before each test"""
        self.dataset = SyntheticDatasetFactory()
        self.grid = self.dataset.grid

    def test_exact_flow_map(self):
        """It should vanish for a model reproducing the discrete flow map"""
        model = ScalingModel(self.grid, midpoint_optimum(self.dataset.dt))
        self.assertAlmostEqual(loss(model, self.dataset), 0.0, places=20)

    def test_constant_model(self):
        """It should average the squared difference quotient against a constant"""
        c = np.linspace(-1.0, 1.0, self.grid.M)
        sample = self.dataset.samples[0]
        expected = np.mean(((sample.u1 - sample.u0) / sample.dt - c) ** 2)
        self.assertAlmostEqual(loss(ShiftModel(self.grid, c), [sample]), expected, places=10)

    def test_duplicated_batch(self):
        """It should not change when the batch is duplicated"""
        model = ScalingModel(self.grid, -0.3)
        samples = self.dataset.samples[:3]
        self.assertAlmostEqual(loss(model, samples), loss(model, samples + samples), places=12)

    def test_schemes_differ(self):
        """It should evaluate the residual of the requested scheme"""
        model = ScalingModel(self.grid, -0.5)
        self.assertNotAlmostEqual(loss(model, self.dataset, "midpoint"), loss(model, self.dataset, "srk4"), places=8)

    def test_penalty(self):
        """It should add the force penalty of a pseudo-Hamiltonian model"""
        model = build_phnn((1, 0, 0, 1), SMALL, grid=self.grid)
        plain = loss(model, self.dataset)
        penalized = loss(model, self.dataset, force_penalty=1.0)
        self.assertGreater(penalized, plain)

    def test_bad_batches(self):
        """It should refuse empty and inconsistent batches"""
        model = ScalingModel(self.grid)
        self.assertRaises(ConfigError, loss, model, [])
        sample = self.dataset.samples[0]
        other = Sample(sample.u0, sample.u1, sample.t, 2 * sample.dt)
        self.assertRaises(ShapeError, loss, model, [sample, other])
        short = Sample(sample.u0[:-1], sample.u1[:-1], sample.t, sample.dt)
        self.assertRaises(ShapeError, loss, model, [short])


######################################################################
#  O P T I M I Z E R   T E S T   C A S E S
######################################################################
class TestAdam(unittest.TestCase):
    """Test Cases for Adam"""

    def test_first_step(self):
        """It should move every parameter by the learning rate on the first step"""
        optimizer = Adam(3, learning_rate=0.1)
        theta = optimizer.step(np.zeros(3), np.array([2.0, -0.5, 1e3]))
        np.testing.assert_allclose(theta, [-0.1, 0.1, -0.1], rtol=1e-6)

    def test_config_validation(self):
        """It should refuse impossible configurations"""
        self.assertRaises(ConfigError, TrainConfig, epochs=0)
        self.assertRaises(ConfigError, TrainConfig, batch_size=0)
        self.assertRaises(ConfigError, TrainConfig, learning_rate=0.0)
        self.assertRaises(ConfigError, TrainConfig, scheme="leapfrog")


######################################################################
#  T R A I N I N G   T E S T   C A S E S
######################################################################
class TestTrain(unittest.TestCase):
    """Test Cases for train and train_ensemble"""

    def setUp(self):
        """This runs before each test"""
        self.dataset = SyntheticDatasetFactory(n_traj=2, n_steps=4)

    def test_one_parameter_sanity(self):
        """It should find the minimizer of the midpoint loss for u' = theta u"""
        cfg = TrainConfigFactory(epochs=500, learning_rate=0.01, log_every=0)
        model, report = train(ScalingModel(self.dataset.grid), self.dataset, cfg)
        theta = model.params.get("theta")[0]
        self.assertAlmostEqual(theta, midpoint_optimum(self.dataset.dt), delta=1e-3)
        self.assertAlmostEqual(theta, -1.0, delta=1e-3)
        self.assertEqual(report.best_epoch, 500)
        self.assertLess(report.train_loss[-1], report.train_loss[0])

    def test_deterministic(self):
        """It should give identical reports for a fixed seed"""
        cfg = TrainConfigFactory(seed=7)
        first = train(ScalingModel(self.dataset.grid), self.dataset, cfg)[1]
        second = train(ScalingModel(self.dataset.grid), self.dataset, cfg)[1]
        self.assertEqual(first.train_loss, second.train_loss)

    def test_input_model_untouched(self):
        """It should train a copy of the model"""
        model = ScalingModel(self.dataset.grid)
        train(model, self.dataset, TrainConfigFactory())
        self.assertEqual(model.params.get("theta")[0], 0.0)

    def test_model_selection(self):
        """It should return the snapshot with the lowest validation score"""
        grid = self.dataset.grid
        ics = np.random.default_rng(0).normal(size=(2, grid.M))
        validation = ValidationSet(ics, np.exp(-0.1) * ics, 0.1, self.dataset.dt)
        cfg = TrainConfigFactory(epochs=6, learning_rate=0.05)
        model, report = train(ScalingModel(grid), self.dataset, cfg, validation=validation)
        self.assertEqual(report.best_val_mse, min(report.val_mse))
        self.assertEqual(validation.score(model), report.best_val_mse)
        self.assertEqual(len(report.rows()), 6)
        self.assertIn("best_epoch", report.summary())

    def test_failed_validation(self):
        """It should score a diverging rollout as infinite"""
        grid = self.dataset.grid
        ics = np.ones((1, grid.M))
        validation = ValidationSet(ics, ics, 1.0, 1.0)
        self.assertEqual(validation.score(ScalingModel(grid, -1000.0)), float("inf"))

    def test_phnn_comes_back_corrected(self):
        """It should return a leakage corrected pseudo-Hamiltonian model"""
        grid = self.dataset.grid
        model = build_phnn((3, 3, 3, 1), SMALL, grid=grid)
        trained, report = train(model, self.dataset, TrainConfigFactory(epochs=2))
        self.assertIsInstance(trained, PHNNModel)
        self.assertTrue(trained.leakage_corrected)
        trained.check_constraints()
        self.assertEqual(len(report.train_loss), 2)

    def test_grid_mismatch(self):
        """It should refuse a dataset on another grid"""
        model = ScalingModel(make_grid(self.dataset.grid.M + 1, 1.0))
        self.assertRaises(ConfigError, train, model, self.dataset, TrainConfigFactory())

    def test_ensemble(self):
        """It should train one member per seed"""
        spec = system_spec("kdvburgers", self.dataset.grid)
        cfg = TrainConfigFactory(epochs=1, seed=3)
        members = train_ensemble("general", spec, self.dataset, cfg, 2, SMALL)
        self.assertEqual(len(members), 2)
        first, second = (model.params.flat() for model, _ in members)
        self.assertFalse(np.array_equal(first, second))
        again = train_ensemble("general", spec, self.dataset, cfg, 1, SMALL)[0][0]
        np.testing.assert_array_equal(again.params.flat(), first)
        self.assertRaises(ConfigError, train_ensemble, "general", spec, self.dataset, cfg, 0, SMALL)

    def test_report_without_validation(self):
        """It should report NaN validation scores when nothing is validated"""
        report = TrainReport()
        report.record(1, 0.5, float("nan"))
        self.assertTrue(np.isnan(report.best_val_mse))


######################################################################
#  V A L I D A T I O N   T E S T   C A S E S
######################################################################
class TestValidate(unittest.TestCase):
    """Test Cases for validate and ValidationSet"""

    def setUp(self):
        """This runs before each test"""
        self.spec = system_spec("bbm", default_grid("bbm", 16))
        self.ics = ValidationSet.build(self.spec, 2, 0.4, 0.4, seed=1).ics

    def test_ground_truth(self):
        """It should give a vanishing score for the ground truth"""
        score = validate(FixedField(self.spec.rhs), self.ics, self.spec, 0.4, 0.4, substeps=self.spec.substeps)
        self.assertLess(score, 1e-10)

    def test_frozen_model(self):
        """It should give the mean squared displacement for a model that never moves"""
        score = validate(FixedField(lambda u, t: 0.0 * u), self.ics, self.spec, 0.4, 0.4)
        validation = ValidationSet.build(self.spec, 2, 0.4, 0.4, seed=1)
        self.assertAlmostEqual(score, float(np.mean((validation.reference - self.ics) ** 2)), places=12)

    def test_no_states(self):
        """It should refuse an empty list of initial states"""
        self.assertRaises(ConfigError, validate, FixedField(self.spec.rhs), [], self.spec, 0.4, 0.4)
        self.assertRaises(ConfigError, ValidationSet.build, self.spec, 0, 0.4, 0.4)

    def test_validation_stream(self):
        """It should draw validation states apart from the training stream"""
        other = ValidationSet.build(self.spec, 2, 0.4, 0.4, seed=2)
        self.assertFalse(np.array_equal(other.ics, self.ics))
        self.assertEqual(replace(TrainConfig(), seed=4).seed, 4)


######################################################################
#  L O S S   G R A D I E N T   T E S T   C A S E S
######################################################################
class TestLossGradient(unittest.TestCase):
    """Test Cases for LossGraph.value_and_grad"""

    def setUp(self):
        """This runs before each test"""
        self.spec = system_spec("kdvburgers", default_grid("kdvburgers", 8))
        rng = np.random.default_rng(11)
        self.U0 = rng.normal(size=(3, 8))
        self.U1 = self.U0 + 0.05 * rng.normal(size=(3, 8))
        self.T = np.array([0.0, 0.05, 0.1])

    def test_matches_finite_differences(self):
        """It should give the finite difference gradient of the penalized loss"""
        rng = np.random.default_rng(5)
        for preset in ("general", "lean", "informed", "baseline"):
            model = build_model(preset, self.spec, SMALL, np.random.default_rng(2))
            theta = model.params.flat()
            for scheme in ("midpoint", "srk4"):
                graph = LossGraph(model, scheme, 0.05, force_penalty=0.1, dissipation_penalty=0.1)
                model.params.set_flat(theta)
                value, grad = graph.value_and_grad(self.U0, self.U1, self.T)
                self.assertEqual(grad.shape, theta.shape)

                def at(vector):
                    model.params.set_flat(vector)
                    return graph.value(self.U0, self.U1, self.T)

                for index in rng.choice(theta.size, size=min(20, theta.size), replace=False):
                    step = np.zeros_like(theta)
                    step[index] = 1e-6
                    numeric = (at(theta + step) - at(theta - step)) / 2e-6
                    self.assertAlmostEqual(numeric, grad[index], delta=1e-4 * max(1.0, abs(grad[index]), value),
                                           msg=f"{preset} {scheme} {index}")
                model.params.set_flat(theta)
