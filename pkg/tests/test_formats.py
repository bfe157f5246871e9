"""
Test cases for dataset, checkpoint and table files

"""
import logging
import os
import tempfile
import unittest

import numpy as np

from phnn import app
from phnn.analysis import Band, MetricsTable, PlotExport
from phnn.common.errors import DataFormatError
from phnn.formats import (
    read_checkpoint,
    read_csv,
    read_dataset,
    write_checkpoint,
    write_dataset,
    write_metrics,
    write_plot_export,
    write_report,
    write_trajectory,
)
from phnn.integrate import Trajectory
from phnn.models import apply_leakage_correction, build_model
from phnn.pdezoo import default_grid, system_spec
from phnn.train import TrainReport
from tests.factories import SyntheticDatasetFactory

SMALL = (4, 8, 8)


######################################################################
#  D A T A S E T   F I L E   T E S T   C A S E S
######################################################################
class TestDatasetFiles(unittest.TestCase):
    """Test Cases for write_dataset and read_dataset"""

    @classmethod
    def setUpClass(cls):
        """This runs once before the entire test suite"""
        app.logger.setLevel(logging.CRITICAL)

    def setUp(self):
        """This runs before each test"""
        self.workdir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.workdir.name, "data", "dataset.csv")

    def tearDown(self):
        """This runs after each test"""
        self.workdir.cleanup()

    def test_bit_exact(self):
        """It should read back exactly what was written"""
        dataset = SyntheticDatasetFactory(n_traj=3, overrides={"nu": 0.0})
        dataset.states = dataset.states * np.pi
        write_dataset(self.path, dataset)
        loaded = read_dataset(self.path)
        self.assertTrue(loaded.equals(dataset))
        self.assertEqual(loaded.overrides, {"nu": 0.0})
        self.assertEqual(loaded.n_trajectories, 3)

    def test_header_layout(self):
        """It should start with the manifest and the column names"""
        dataset = SyntheticDatasetFactory()
        write_dataset(self.path, dataset)
        with open(self.path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        self.assertEqual(lines[0], "# version=1")
        self.assertEqual(lines[1], "# system=kdvburgers")
        self.assertTrue(lines[10].startswith("trajectory_id,t,u_0,"))
        self.assertEqual(len(lines), 11 + dataset.n_states)

    def _damaged(self, transform):
        write_dataset(self.path, SyntheticDatasetFactory())
        with open(self.path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        with open(self.path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(transform(lines)) + "\n")

    def test_missing_rows(self):
        """It should refuse a file with fewer rows than declared"""
        self._damaged(lambda lines: lines[:-1])
        self.assertRaises(DataFormatError, read_dataset, self.path)

    def test_missing_header(self):
        """It should refuse a file without the seed"""
        self._damaged(lambda lines: [line for line in lines if not line.startswith("# seed=")])
        self.assertRaises(DataFormatError, read_dataset, self.path)

    def test_wrong_version(self):
        """It should refuse unknown versions"""
        self._damaged(lambda lines: ["# version=9"] + lines[1:])
        self.assertRaises(DataFormatError, read_dataset, self.path)

    def test_short_row(self):
        """It should refuse rows with missing columns"""
        self._damaged(lambda lines: lines[:-1] + [lines[-1].rsplit(",", 1)[0]])
        self.assertRaises(DataFormatError, read_dataset, self.path)

    def test_garbage_value(self):
        """It should refuse cells that are not numbers"""
        self._damaged(lambda lines: lines[:-1] + [lines[-1].replace(",", ",x", 1)])
        self.assertRaises(DataFormatError, read_dataset, self.path)


######################################################################
#  C H E C K P O I N T   T E S T   C A S E S
######################################################################
class TestCheckpoints(unittest.TestCase):
    """Test Cases for write_checkpoint and read_checkpoint"""

    def setUp(self):
        """This runs before each test"""
        self.workdir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.workdir.name, "model.ckpt")
        self.spec = system_spec("bbm", default_grid("bbm", 16))

    def tearDown(self):
        """This runs after each test"""
        self.workdir.cleanup()

    def test_round_trip(self):
        """It should restore parameters and outputs bit for bit"""
        u = np.random.default_rng(0).normal(size=16)
        for preset in ("general", "informed", "nodiss", "baseline"):
            model = build_model(preset, self.spec, SMALL, np.random.default_rng(1))
            if preset != "baseline":
                model = apply_leakage_correction(model)
            write_checkpoint(self.path, model)
            loaded = read_checkpoint(self.path)
            self.assertEqual(loaded.label, model.label)
            self.assertEqual(loaded.params.names(), model.params.names())
            np.testing.assert_array_equal(loaded.params.flat(), model.params.flat())
            np.testing.assert_array_equal(loaded.forward(u, 0.3), model.forward(u, 0.3))

    def test_parameter_lines(self):
        """It should write one parameter per line with name, shape and constraint"""
        write_checkpoint(self.path, build_model("general", self.spec, SMALL))
        with open(self.path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        self.assertEqual(lines[0], "# version=1")
        self.assertTrue(lines[1].startswith("# meta="))
        self.assertIn("param,A.w1,1,symmetric,1,0", lines)

    def _rewrite(self, transform):
        write_checkpoint(self.path, build_model("general", self.spec, SMALL))
        with open(self.path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        with open(self.path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(transform(lines)) + "\n")

    def test_wrong_value_count(self):
        """It should refuse a parameter whose values do not fill its shape"""
        self._rewrite(lambda lines: lines[:2] + [lines[2] + " 1.0"] + lines[3:])
        self.assertRaises(DataFormatError, read_checkpoint, self.path)

    def test_malformed_line(self):
        """It should refuse lines that are not parameters"""
        self._rewrite(lambda lines: lines + ["weights,1,2"])
        self.assertRaises(DataFormatError, read_checkpoint, self.path)

    def test_bad_meta(self):
        """It should refuse a broken metadata line"""
        self._rewrite(lambda lines: [lines[0], "# meta={not json"] + lines[2:])
        self.assertRaises(DataFormatError, read_checkpoint, self.path)
        self._rewrite(lambda lines: ["# version=2"] + lines[1:])
        self.assertRaises(DataFormatError, read_checkpoint, self.path)


######################################################################
#  T A B L E   T E S T   C A S E S
######################################################################
class TestTables(unittest.TestCase):
    """Test Cases for the CSV tables"""

    def setUp(self):
        """This runs before each test"""
        self.workdir = tempfile.TemporaryDirectory()

    def tearDown(self):
        """This runs after each test"""
        self.workdir.cleanup()

    def path(self, name):
        """File in the scratch directory"""
        return os.path.join(self.workdir.name, name)

    def test_metrics(self):
        """It should write model_type, mean and std"""
        table = MetricsTable()
        table.add("PHNN (informed)", [1.0e-4, 3.0e-4])
        columns, rows = read_csv(write_metrics(self.path("metrics.csv"), table))
        self.assertEqual(columns, ["model_type", "mean", "std"])
        self.assertEqual(rows[0][0], "PHNN (informed)")
        self.assertEqual(float(rows[0][1]), table.row("PHNN (informed)").mean)

    def test_report(self):
        """It should write one row per epoch"""
        report = TrainReport()
        report.record(1, 0.5, 0.25)
        report.record(2, 0.125, float("nan"))
        columns, rows = read_csv(write_report(self.path("report.csv"), report))
        self.assertEqual(columns, ["epoch", "train_loss", "val_mse"])
        self.assertEqual(rows, [["1", "0.5", "0.25"], ["2", "0.125", "nan"]])

    def test_plot_export(self):
        """It should write one row per grid node"""
        x = np.linspace(0.0, 1.0, 5)
        export = PlotExport(x, np.sin(x), Band(x, 0 * x, x - 1, x + 1))
        columns, rows = read_csv(write_plot_export(self.path("panel.csv"), export))
        self.assertEqual(columns[:2], ["x", "reference"])
        self.assertEqual(len(rows), 5)
        self.assertEqual(float(rows[3][1]), np.sin(x[3]))

    def test_trajectory(self):
        """It should write time and state columns"""
        trajectory = Trajectory(np.array([0.0, 0.1]), np.arange(6.0).reshape(2, 3))
        columns, rows = read_csv(write_trajectory(self.path("nested/rollout.csv"), trajectory))
        self.assertEqual(columns, ["t", "u_0", "u_1", "u_2"])
        self.assertEqual(rows[1], ["0.10000000000000001", "3", "4", "5"])
