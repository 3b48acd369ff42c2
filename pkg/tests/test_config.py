#!/usr/bin/env python3
# test_config.py - Tests for the run configuration
"""
Tests for config.py: defaults, JSON parsing, type and range validation.
"""

import json
import math
import os
import shutil
import sys
import tempfile
import unittest

# Add project root to sys.path to allow for src imports
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from src.core.config import RunConfig, load_config
from src.core.errors import ConfigError
from tests.test_utils import LoggedTestCase, run_suite


class TestRunConfig(unittest.TestCase):
    """Defaults and dictionary conversion"""

    def test_defaults(self):
        config = RunConfig()
        self.assertEqual(config.nu, 1.0)
        self.assertEqual(config.bounds.a, (-1.0, -1.0))
        self.assertEqual(config.bounds.b, (1.0, 1.0))
        self.assertEqual(config.mesh.n, 8)
        self.assertEqual(config.ladder.mode, "uniform")
        self.assertEqual(config.solver.newton_tol, 1e-10)
        self.assertEqual(config.ocp.line_search_evals, 20)
        self.assertTrue(math.isinf(config.estimator.c_l125))
        self.assertIsNone(config.output.vtk)

    def test_partial_document(self):
        config = RunConfig.from_dict({"nu": 0.1, "mesh": {"n": 4}, "ladder": {"levels": 2}})
        self.assertEqual(config.nu, 0.1)
        self.assertEqual(config.mesh.n, 4)
        self.assertEqual(config.ladder.levels, 2)
        self.assertEqual(config.ladder.theta, 0.5)
        self.assertEqual(config.ocp.gap_tol, 1e-8)

    def test_integers_accepted_for_floats(self):
        config = RunConfig.from_dict({"nu": 2, "ocp": {"gap_tol": 1}})
        self.assertIsInstance(config.nu, float)
        self.assertEqual(config.ocp.gap_tol, 1.0)

    def test_dict_round_trip(self):
        config = RunConfig.from_dict({
            "bounds": {"a": [-2, 0], "b": [0.5, 3]},
            "estimator": {"t_prime": 3, "c_l125": 7.5},
            "output": {"csv": "out/table.csv", "vtk": "out/fields.vtk"},
        })
        self.assertEqual(RunConfig.from_dict(config.to_dict()), config)

    def test_infinite_constant_serialized_as_null(self):
        data = RunConfig().to_dict()
        self.assertIsNone(data["estimator"]["c_l125"])
        json.dumps(data)
        self.assertTrue(math.isinf(RunConfig.from_dict(data).estimator.c_l125))

    def test_unknown_keys(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_dict({"viscosity": 1.0})
        with self.assertRaises(ConfigError):
            RunConfig.from_dict({"mesh": {"size": 8}})

    def test_wrong_types(self):
        for data in ({"nu": "1"}, {"nu": True}, {"mesh": {"n": "8"}}, {"mesh": {"n": 2.5}},
                     {"bounds": {"a": "low"}}, {"output": {"csv": 3}}, {"solver": []}, []):
            with self.subTest(data=data):
                with self.assertRaises(ConfigError):
                    RunConfig.from_dict(data)

    def test_invalid_values(self):
        for data in ({"nu": 0}, {"bounds": {"a": [2, 0], "b": [1, 1]}}, {"bounds": {"a": [0, 0, 0]}},
                     {"mesh": {"type": "lshape"}}, {"mesh": {"n": 0}}, {"ladder": {"mode": "random"}},
                     {"ladder": {"theta": 0.0}}, {"estimator": {"t_prime": 5}}, {"estimator": {"p": 2}},
                     {"estimator": {"p": 5}}, {"estimator": {"gamma": 0.5}}, {"estimator": {"marking": "both"}}):
            with self.subTest(data=data):
                with self.assertRaises(ConfigError):
                    RunConfig.from_dict(data)

    def test_degenerate_bounds_allowed(self):
        config = RunConfig.from_dict({"bounds": {"a": [0.5, 0.5], "b": [0.5, 0.5]}})
        self.assertEqual(config.bounds.a, config.bounds.b)


class TestLoadConfig(LoggedTestCase):
    """Reading configuration files"""
    patched_modules = ("src.core.config",)

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.mkdtemp(prefix="test_config_")

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)
        super().tearDown()

    def _write(self, text):
        path = os.path.join(self.tmp, "run.json")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
        return path

    def test_none_gives_defaults(self):
        self.assertEqual(load_config(None), RunConfig())

    def test_load_file(self):
        path = self._write(json.dumps({"nu": 0.5, "ladder": {"levels": 3, "mode": "adaptive"}}))
        config = load_config(path)
        self.assertEqual(config.nu, 0.5)
        self.assertEqual(config.ladder.mode, "adaptive")
        self.assertTrue(any("loaded" in m for m in self.mock_logger.messages("INFO")))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(os.path.join(self.tmp, "absent.json"))

    def test_invalid_json(self):
        with self.assertRaises(ConfigError):
            load_config(self._write("{nu: 1"))


def run_all_tests():
    return run_suite("Configuration Tests", [TestRunConfig, TestLoadConfig])


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)
