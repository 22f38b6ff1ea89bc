"""
Tests for cli module.
"""

import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest.mock import patch

from muxsim.cli import EXIT_CONFIG, EXIT_ERROR, EXIT_FIT, EXIT_OK, main
from muxsim.utils import FitFailureError, MuxSimError


def run_main(argv):
    stdout, stderr = io.StringIO(), io.StringIO()
    with redirect_stdout(stdout), redirect_stderr(stderr):
        code = main(argv)
    return code, stdout.getvalue(), stderr.getvalue()


class TestCli(unittest.TestCase):
    """Exit codes and argument handling."""

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.dir = self.temp_dir.name

    def tearDown(self):
        self.temp_dir.cleanup()

    def write_config(self, document):
        path = os.path.join(self.dir, "run.json")
        with open(path, "w") as f:
            json.dump(document, f)
        return path

    def test_no_command(self):
        code, stdout, _ = run_main([])
        self.assertEqual(code, EXIT_ERROR)
        self.assertIn("usage", stdout)

    def test_info(self):
        code, stdout, _ = run_main(["info"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Q3: chi = -1.4", stdout)
        self.assertIn("MUXSIM_THREADS", stdout)

    def test_validate(self):
        self.assertEqual(run_main(["validate"])[0], EXIT_OK)

        path = self.write_config({"simulation_rate": 1500.0})
        code, _, stderr = run_main(["validate", "-c", path])
        self.assertEqual(code, EXIT_CONFIG)
        self.assertIn("simulation_rate", stderr)

        path = self.write_config({"readout": {"photon": 1.0}})
        self.assertEqual(run_main(["validate", "-c", path])[0], EXIT_CONFIG)

    def test_run_overrides(self):
        with patch("muxsim.cli.run_experiment") as mock_run:
            mock_run.return_value = {"outputs": [], "manifest": "manifest.json"}
            code, stdout, _ = run_main(["run", "-e", "ramsey", "--shots", "5", "--seed", "9",
                                        "--out", self.dir, "--fast-path", "--threads", "3"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("✓ Success!", stdout)
        cfg = mock_run.call_args[0][0]
        self.assertEqual(cfg.experiment, "ramsey")
        self.assertEqual(cfg.shots, 5)
        self.assertEqual(cfg.seed, 9)
        self.assertEqual(cfg.output_dir, self.dir)
        self.assertTrue(cfg.fast_path)
        self.assertEqual(mock_run.call_args[1]["workers"], 3)

    def test_run_without_fast_path_flag_keeps_config(self):
        path = self.write_config({"fast_path": True})
        with patch("muxsim.cli.run_experiment") as mock_run:
            mock_run.return_value = {"outputs": [], "manifest": "manifest.json"}
            run_main(["run", "-c", path])
        self.assertTrue(mock_run.call_args[0][0].fast_path)

    def test_run_error_codes(self):
        for error, expected in ((FitFailureError("no fit"), EXIT_FIT), (MuxSimError("boom"), EXIT_ERROR),
                                (RuntimeError("bug"), EXIT_ERROR)):
            with patch("muxsim.cli.run_experiment", side_effect=error):
                code, _, stderr = run_main(["run", "--out", self.dir])
            self.assertEqual(code, expected)
            self.assertTrue(stderr)

    def test_run_bad_seed(self):
        self.assertEqual(run_main(["run", "--seed", "-3", "--out", self.dir])[0], EXIT_CONFIG)

    def test_run_ramsey(self):
        code, stdout, _ = run_main(["run", "-e", "ramsey", "--out", self.dir])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Q2: f = ", stdout)
        self.assertTrue(os.path.exists(os.path.join(self.dir, "manifest.json")))

    def test_run_histogram_individual(self):
        path = self.write_config({"fast_path": True, "shots": 1000, "channels": ["Q2"],
                                  "histogram": {"individual": True}})
        code, stdout, _ = run_main(["run", "-c", path, "--out", self.dir])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Q2: F = ", stdout)
        self.assertIn("read alone: F = ", stdout)

    def test_calibrate_shots(self):
        with patch("muxsim.cli.calibrate_efficiency") as mock_calibrate:
            mock_calibrate.return_value = {"efficiency": 0.35, "fidelity": 0.9857, "evaluations": 12}
            code, stdout, _ = run_main(["calibrate", "--shots", "400", "--out", self.dir])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(mock_calibrate.call_args[0][0].calibration.shots, 400)
        self.assertIn("Efficiency: 0.3500", stdout)


if __name__ == '__main__':
    unittest.main()
