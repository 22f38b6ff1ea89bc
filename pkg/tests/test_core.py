"""
Tests for core module.
"""

import json
import os
import tempfile
import unittest
from pathlib import Path

from muxsim.config import load_experiment_config
from muxsim.core import (
    calibrate_efficiency,
    get_library_info,
    run_chi_calibration,
    run_crosstalk,
    run_experiment,
    run_histogram,
    run_jumps,
    run_rabi,
    run_ramsey,
    run_spectroscopy,
)
from muxsim.device import dispersive_shift, load_device
from muxsim.utils import ConfigError, FitFailureError

ACCEPTANCE = os.environ.get("MUXSIM_ACCEPTANCE") == "1"


class ExperimentTestCase(unittest.TestCase):
    """Runs experiments into a temporary output directory."""

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.out = Path(self.temp_dir.name)

    def tearDown(self):
        self.temp_dir.cleanup()

    def config(self, **overrides):
        cfg = load_experiment_config(overrides={"output_dir": str(self.out)})
        return cfg.updated(**overrides) if overrides else cfg

    def summary(self, name="summary.txt"):
        values = {}
        with open(self.out / name) as f:
            for line in f:
                key, _, value = line.rstrip("\n").partition("=")
                values[key] = value
        return values


class TestHistogram(ExperimentTestCase):

    def test_fast_path(self):
        cfg = self.config(**{"fast_path": True, "shots": 2000, "channels": ["Q2", "Q4"]})
        result = run_histogram(cfg, workers=1)
        self.assertEqual(sorted(result["fidelities"]), ["Q2", "Q4"])
        for summary in result["fidelities"].values():
            self.assertGreater(summary.fidelity, 0.9)
            self.assertLessEqual(summary.fidelity, 1.0)
            self.assertLess(summary.discard_fraction, 0.15)
        self.assertAlmostEqual(result["integration_length"], 1.0)
        self.assertTrue((self.out / "histogram_Q2.csv").exists())
        self.assertFalse((self.out / "waveform_g.csv").exists())
        values = self.summary()
        self.assertEqual(values["experiment"], "histogram")
        self.assertIn("Q4.fidelity", values)
        self.assertIn("Q2.separation", values)

    def test_full_path_writes_waveforms(self):
        cfg = self.config(**{"shots": 20, "channels": ["Q1"]})
        result = run_histogram(cfg, workers=1)
        self.assertEqual(list(result["fidelities"]), ["Q1"])
        self.assertTrue((self.out / "waveform_g.csv").exists())
        self.assertTrue((self.out / "waveform_e.csv").exists())

    def test_identical_seed_identical_files(self):
        cfg = self.config(**{"fast_path": True, "shots": 300, "channels": ["Q3"], "seed": 11})
        run_histogram(cfg, workers=1)
        first = (self.out / "summary.txt").read_bytes()
        run_histogram(cfg, workers=2)
        self.assertEqual((self.out / "summary.txt").read_bytes(), first)

    def test_individual_readout(self):
        cfg = self.config(**{"fast_path": True, "shots": 2000, "channels": ["Q2", "Q4"],
                             "histogram.individual": True})
        result = run_histogram(cfg, workers=1)
        self.assertEqual(sorted(result["individual_fidelities"]), ["Q2", "Q4"])
        values = self.summary()
        for label, summary in result["fidelities"].items():
            alone = result["individual_fidelities"][label]
            # The closed-form path reads each channel from its own tone only.
            self.assertAlmostEqual(alone.fidelity, summary.fidelity, places=12)
            self.assertEqual(alone.total, summary.total)
            self.assertAlmostEqual(float(values[f"{label}.individual_fidelity"]), alone.fidelity, places=6)
            self.assertEqual(result["key_results"][f"{label}.individual_fidelity"], alone.fidelity)

    def test_individual_readout_full_path(self):
        cfg = self.config(**{"shots": 30, "channels": ["Q1", "Q2"], "histogram.individual": True})
        result = run_histogram(cfg, workers=1)
        for label in ("Q1", "Q2"):
            fidelity = result["individual_fidelities"][label].fidelity
            self.assertGreaterEqual(fidelity, 0.0)
            self.assertLessEqual(fidelity, 1.0)
        self.assertIn("Q1.individual_discard_fraction", self.summary())

    def test_individual_off_by_default(self):
        result = run_histogram(self.config(**{"fast_path": True, "shots": 300, "channels": ["Q3"]}), workers=1)
        self.assertEqual(result["individual_fidelities"], {})
        self.assertNotIn("Q3.individual_fidelity", self.summary())

    def test_unknown_channel(self):
        with self.assertRaises(ConfigError):
            run_histogram(self.config(channels=["Q9"]))


class TestSpectroscopy(ExperimentTestCase):

    def test_linewidth_and_pull(self):
        cfg = self.config(**{"channels": ["Q1"], "spectroscopy.points": 41})
        result = run_spectroscopy(cfg)
        fits = result["channels"]["Q1"]["fits"]
        self.assertAlmostEqual(fits["g"].kappa / 8.4, 1.0, delta=0.01)
        separation = float(self.summary()["Q1.separation_mhz"])
        two_chi = 2 * abs(dispersive_shift(load_device().channel("Q1")))
        self.assertAlmostEqual(separation / two_chi, 1.0, delta=0.02)
        self.assertTrue((self.out / "spectroscopy_Q1.csv").exists())

    def test_zero_amplitude_is_flat(self):
        cfg = self.config(**{"channels": ["Q2"], "spectroscopy.points": 11, "spectroscopy.photons": 0.0})
        result = run_spectroscopy(cfg)
        self.assertEqual(result["channels"]["Q2"]["fits"], {})
        self.assertTrue(all(abs(g) == 0 for g in result["channels"]["Q2"]["gamma"]["g"]))
        self.assertNotIn("Q2.kappa_fit", self.summary())


class TestRabi(ExperimentTestCase):

    def test_oscillation_frequency(self):
        cfg = self.config(**{"fast_path": True, "channels": ["Q2"], "rabi.points": 41,
                             "rabi.shots_per_point": 100})
        result = run_rabi(cfg, workers=1)
        self.assertEqual(len(result["curves"]["Q2"]), 41)
        self.assertAlmostEqual(result["fits"]["Q2"].freq, 5.0, delta=0.25)
        self.assertTrue((self.out / "rabi.csv").exists())


class TestRamsey(ExperimentTestCase):

    def test_noiseless_fringes(self):
        cfg = self.config(**{"ramsey.shots_per_point": None})
        result = run_ramsey(cfg)
        dev = load_device()
        for label, fit in result["fits"].items():
            self.assertAlmostEqual(fit.freq, 2.0, delta=1e-4)
            self.assertAlmostEqual(fit.decay_time, dev.channel(label).t2_ramsey, delta=1e-3)

    def test_projection_noise(self):
        result = run_ramsey(self.config(**{"channels": ["Q3"]}))
        self.assertAlmostEqual(result["fits"]["Q3"].freq / 2.0, 1.0, delta=0.02)


class TestCrosstalk(ExperimentTestCase):

    def test_calibrated_leakage_shifts_victim(self):
        result = run_crosstalk(self.config())
        self.assertAlmostEqual(result["spurious_photons"], 0.106, places=6)
        self.assertAlmostEqual(result["stark_shift"], -0.299, delta=0.005)
        self.assertAlmostEqual(result["delta_freq"], 0.30, delta=0.03)
        self.assertLess(result["delta_freq_signed"], 0)
        self.assertEqual(result["delta_freq"], abs(result["delta_freq_signed"]))
        self.assertLess(result["decay_time_on"], result["decay_time_off"])
        self.assertLess(result["delta_decay_time_signed"], 0)
        self.assertEqual(result["delta_decay_time"], abs(result["delta_decay_time_signed"]))
        self.assertIn("delta_freq_signed", self.summary())
        self.assertTrue((self.out / "crosstalk.csv").exists())

    def test_no_leakage_no_shift(self):
        result = run_crosstalk(self.config(**{"crosstalk.leakage": 0.0}))
        self.assertEqual(result["spurious_photons"], 0.0)
        self.assertAlmostEqual(result["delta_freq"], 0.0, places=9)
        self.assertAlmostEqual(result["delta_decay_time"], 0.0, places=9)

    def test_victim_must_differ(self):
        with self.assertRaises(ConfigError):
            run_crosstalk(self.config(**{"crosstalk.aggressor": "Q3"}))


class TestJumps(ExperimentTestCase):

    def test_traces_written(self):
        cfg = self.config(**{"channels": ["Q3"], "jumps.traces": 20})
        result = run_jumps(cfg)
        report = result["reports"]["Q3"]
        self.assertEqual(len(report.initial_states), 20)
        self.assertTrue(all(t >= 0 for times in report.jump_times for t in times))
        for index in range(5):
            self.assertTrue((self.out / f"trace_Q3_{index}.csv").exists())
        self.assertFalse((self.out / "trace_Q3_5.csv").exists())
        self.assertTrue((self.out / "jumps_Q3.csv").exists())

    @unittest.skipUnless(ACCEPTANCE, "set MUXSIM_ACCEPTANCE=1 for long runs")
    def test_dwell_times_follow_t1(self):
        result = run_jumps(self.config(**{"jumps.traces": 10000}))
        dev = load_device()
        for label, report in result["reports"].items():
            self.assertAlmostEqual(report.mean_dwell_time / dev.channel(label).t1, 1.0, delta=0.05)
            self.assertGreater(report.ks_pvalue, 0.01)


class TestChiCalibration(ExperimentTestCase):

    def test_all_channels(self):
        result = run_chi_calibration(self.config())
        self.assertEqual(sorted(result["chi"]), ["Q1", "Q2", "Q3", "Q4"])
        for configured, extracted in result["chi"].values():
            self.assertAlmostEqual(extracted / configured, 1.0, delta=0.05)
        self.assertTrue((self.out / "chi_calibration.csv").exists())


class TestCalibrateEfficiency(ExperimentTestCase):

    def test_bisection(self):
        cfg = self.config(**{"calibration.shots": 500, "calibration.target_fidelity": 0.95,
                             "calibration.tolerance": 0.05})
        result = calibrate_efficiency(cfg, workers=1)
        self.assertGreater(result["efficiency"], 0.02)
        self.assertLess(result["efficiency"], 1.0)
        self.assertGreater(result["evaluations"], 2)
        self.assertTrue((self.out / "calibration.txt").exists())

    def test_unreachable_target(self):
        cfg = self.config(**{"calibration.shots": 300, "calibration.target_fidelity": 0.99999})
        with self.assertRaises(FitFailureError):
            calibrate_efficiency(cfg, workers=1)

    @unittest.skipUnless(ACCEPTANCE, "set MUXSIM_ACCEPTANCE=1 for long runs")
    def test_calibrated_fidelities(self):
        result = calibrate_efficiency(self.config())
        cfg = self.config(**{"amplifier.efficiency": result["efficiency"], "shots": 30000})
        fidelities = run_histogram(cfg)["fidelities"]
        for label, target in (("Q1", 0.9805), ("Q3", 0.9807), ("Q4", 0.9868)):
            self.assertAlmostEqual(fidelities[label].fidelity, target, delta=0.01)


class TestFastFullAgreement(ExperimentTestCase):

    @unittest.skipUnless(ACCEPTANCE, "set MUXSIM_ACCEPTANCE=1 for long runs")
    def test_fidelities_agree(self):
        full = run_histogram(self.config(shots=10000))["fidelities"]
        fast = run_histogram(self.config(shots=10000, fast_path=True))["fidelities"]
        for label in full:
            self.assertAlmostEqual(full[label].fidelity, fast[label].fidelity, delta=0.005)


class TestRunExperiment(ExperimentTestCase):

    def test_manifest(self):
        cfg = self.config(**{"experiment": "ramsey", "channels": ["Q1"]})
        result = run_experiment(cfg)
        with open(result["manifest"]) as f:
            manifest = json.load(f)
        self.assertEqual(manifest["outputs"], ["ramsey.csv", "summary.txt"])
        self.assertEqual(manifest["config"]["experiment"], "ramsey")
        self.assertEqual(load_experiment_config(overrides=manifest["config"]), cfg)

    def test_manifest_records_fidelities(self):
        cfg = self.config(**{"fast_path": True, "shots": 1000, "channels": ["Q4"], "histogram.individual": True})
        result = run_experiment(cfg, workers=1)
        with open(result["manifest"]) as f:
            manifest = json.load(f)
        self.assertEqual(sorted(manifest["results"]), ["Q4.fidelity", "Q4.individual_fidelity"])
        self.assertAlmostEqual(manifest["results"]["Q4.fidelity"], result["fidelities"]["Q4"].fidelity)
        self.assertTrue(manifest["config"]["histogram"]["individual"])

    def test_library_info(self):
        info = get_library_info()
        self.assertEqual(info["bundled_channels"], ["Q1", "Q2", "Q3", "Q4"])
        self.assertIn("crosstalk", info["experiments"])
        self.assertAlmostEqual(info["dispersive_shifts_mhz"]["Q3"], -1.409, delta=0.005)
        self.assertEqual(info["worker_env_var"], "MUXSIM_THREADS")


if __name__ == '__main__':
    unittest.main()
