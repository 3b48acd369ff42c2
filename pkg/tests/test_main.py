#!/usr/bin/env python3
# test_main.py - Tests for the command-line entry point
"""
Tests for main.py: argument parsing, exit codes and the files written by
the benchmark commands.
"""

import json
import os
import shutil
import sys
import tempfile
import unittest
from unittest.mock import patch

# Add project root to sys.path to allow for src imports
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from src import main as cli
from src.core.errors import NewtonDiverged
from src.bench.export import read_csv
from tests.test_utils import LoggedTestCase, run_suite

CLI_MODULES = ("src.main", "src.core.config", "src.bench.export", "src.bench.convergence",
               "src.bench.invariants", "src.control.estimators", "src.control.ocp", "src.control.solvers")


class CliTestCase(LoggedTestCase):
    patched_modules = CLI_MODULES

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.mkdtemp()
        self.saved_hook = sys.excepthook

    def tearDown(self):
        sys.excepthook = self.saved_hook
        shutil.rmtree(self.tmp, ignore_errors=True)
        super().tearDown()

    def write_config(self, document, name="config.json"):
        path = os.path.join(self.tmp, name)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(document, handle)
        return path

    def run_cli(self, *args):
        return cli.main(["--log-dir", os.path.join(self.tmp, "logs"), *args])


class TestParser(unittest.TestCase):

    def test_subcommand_required(self):
        with patch("sys.stderr"):
            with self.assertRaises(SystemExit):
                cli.build_parser().parse_args([])

    def test_every_command_accepts_config(self):
        parser = cli.build_parser()
        for command in cli.COMMANDS:
            args = parser.parse_args(["-v", command, "--config", "run.json"])
            self.assertEqual(args.command, command)
            self.assertEqual(args.config, "run.json")
            self.assertTrue(args.verbose)

    def test_unknown_command(self):
        with patch("sys.stderr"):
            with self.assertRaises(SystemExit):
                cli.build_parser().parse_args(["optimize"])


class TestExitCodes(CliTestCase):

    def test_check_invariants(self):
        path = self.write_config({"mesh": {"n": 2}})
        self.assertEqual(self.run_cli("check-invariants", "--config", path), cli.EXIT_OK)
        self.assertTrue(any("finished with exit code 0" in m for m in self.mock_logger.messages("SYSTEM")))

    def test_missing_config(self):
        code = self.run_cli("ns-converge", "--config", os.path.join(self.tmp, "absent.json"))
        self.assertEqual(code, cli.EXIT_CONFIG)
        self.assertTrue(any("Configuration error" in m for m in self.mock_logger.messages("ERROR")))

    def test_invalid_config(self):
        path = self.write_config({"nu": -1.0})
        self.assertEqual(self.run_cli("ns-converge", "--config", path), cli.EXIT_CONFIG)
        bad = os.path.join(self.tmp, "broken.json")
        with open(bad, "w", encoding="utf-8") as handle:
            handle.write("{ not json")
        self.assertEqual(self.run_cli("ns-converge", "--config", bad), cli.EXIT_CONFIG)

    def test_solver_failure(self):
        with patch("src.main.run_command", side_effect=NewtonDiverged("no convergence", None)):
            self.assertEqual(self.run_cli("ns-converge"), cli.EXIT_SOLVER)

    def test_unexpected_error(self):
        with patch("src.main.run_command", side_effect=RuntimeError("boom")):
            self.assertEqual(self.run_cli("ns-converge"), cli.EXIT_UNEXPECTED)
        self.assertTrue(any("Unexpected error: boom" in m for m in self.mock_logger.messages("ERROR")))

    def test_exception_handler(self):
        with patch("sys.__excepthook__") as default_hook:
            try:
                raise KeyError("lost")
            except KeyError as e:
                cli.exception_handler(type(e), e, e.__traceback__)
        default_hook.assert_called_once()
        self.assertTrue(any("Uncaught exception" in m for m in self.mock_logger.messages("ERROR")))


class TestCommands(CliTestCase):

    def _document(self, csv_name, vtk_name=None):
        return {
            "mesh": {"n": 4},
            "ladder": {"levels": 1},
            "ocp": {"gap_tol": 1e-6},
            "output": {"csv": os.path.join(self.tmp, "out", csv_name),
                       "vtk": os.path.join(self.tmp, "out", vtk_name) if vtk_name else None},
        }

    def test_ns_converge(self):
        path = self.write_config(self._document("ns.csv", "ns.vtk"))
        self.assertEqual(self.run_cli("ns-converge", "--config", path), cli.EXIT_OK)
        frame = read_csv(os.path.join(self.tmp, "out", "ns.csv"))
        self.assertEqual(len(frame), 1)
        self.assertTrue(os.path.exists(os.path.join(self.tmp, "out", "ns.vtk")))
        self.assertFalse(os.path.exists(os.path.join(self.tmp, "out", "ns_history.csv")))

    def test_ocp_converge(self):
        path = self.write_config(self._document("ocp.csv", "ocp.vtk"))
        self.assertEqual(self.run_cli("ocp-converge", "--config", path), cli.EXIT_OK)
        out = os.path.join(self.tmp, "out")
        frame = read_csv(os.path.join(out, "ocp.csv"))
        self.assertEqual(len(frame), 1)
        self.assertGreater(frame["err_u_L1"].iloc[0], 0.0)
        history = read_csv(os.path.join(out, "ocp_history.csv"))
        self.assertGreaterEqual(len(history), 1)
        with open(os.path.join(out, "ocp.vtk"), encoding="utf-8") as handle:
            text = handle.read()
        self.assertIn("VECTORS adjoint_velocity double", text)

    def test_adapt(self):
        document = self._document("adapt.csv")
        document["ladder"]["levels"] = 2
        path = self.write_config(document)
        self.assertEqual(self.run_cli("adapt", "--config", path), cli.EXIT_OK)
        frame = read_csv(os.path.join(self.tmp, "out", "adapt.csv"))
        self.assertIn(len(frame), (1, 2))

    def test_report_assumptions(self):
        path = self.write_config({"mesh": {"n": 4}, "ocp": {"gap_tol": 1e-6}})
        self.assertEqual(self.run_cli("report-assumptions", "--config", path), cli.EXIT_OK)


def run_all_tests():
    return run_suite("Command-Line Tests", [TestParser, TestExitCodes, TestCommands])


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)
