"""
Tests for feedline module.
"""

import unittest

import numpy as np
from pydantic import ValidationError

from muxsim.device import EXCITED, GROUND, DeviceConfig, QubitCavityConfig, dispersive_shift, load_device
from muxsim.feedline import (
    AliasingError,
    CavityState,
    ReadoutComb,
    ResolutionError,
    ToneSpec,
    build_readout_comb,
    fit_reflection,
    readout_amplitude,
    reflect,
    reflection_coefficient,
    resonance_offset,
    steady_state_photons,
    synthesize_comb,
)
from muxsim.qubit_dynamics import spurious_photons
from muxsim.utils import FitFailureError


def single_channel_device(kappa_ext=5.0, kappa_int=0.0):
    channel = QubitCavityConfig(label="Q1", cavity_freq=5.985, kappa_ext=kappa_ext, kappa_int=kappa_int,
                                qubit_freq=3.9, anharmonicity=-300, coupling_g=100, t1=50, t2_ramsey=2,
                                t2_echo=3)
    return DeviceConfig(channels=[channel], carrier_freq=5.985)


def tone(channel="Q1", offset=0.0, amplitude=1.0, duration=1.0, **kwargs):
    return ToneSpec(channel=channel, offset_freq=offset, amplitude=amplitude, duration=duration, **kwargs)


class TestSynthesizeComb(unittest.TestCase):
    """Comb synthesis."""

    def test_single_tone(self):
        wf = synthesize_comb(ReadoutComb(tones=[tone(offset=12.5, amplitude=2.0, phase=0.3)]), 1.0, 1000.0)
        self.assertEqual(len(wf), 1000)
        expected = 2.0 * np.exp(1j * (2 * np.pi * 12.5 * wf.times + 0.3))
        np.testing.assert_allclose(wf.samples, expected, atol=1e-12)

    def test_components_sum_to_samples(self):
        comb = ReadoutComb(tones=[tone("A", 10.0), tone("B", -40.0, 0.5)])
        wf = synthesize_comb(comb, 0.5, 1000.0)
        self.assertEqual(wf.components.shape, (2, 500))
        np.testing.assert_allclose(wf.components.sum(axis=0), wf.samples, atol=1e-12)

    def test_gate(self):
        wf = synthesize_comb(ReadoutComb(tones=[tone(start=0.2, duration=0.3)]), 1.0, 100.0)
        on = np.abs(wf.samples) > 0
        self.assertEqual(int(on.sum()), 30)
        self.assertTrue(on[20] and on[49])
        self.assertFalse(on[19] or on[50])

    def test_aliasing(self):
        with self.assertRaises(AliasingError):
            synthesize_comb(ReadoutComb(tones=[tone(offset=500.0)]), 1.0, 1000.0)

    def test_empty_comb(self):
        wf = synthesize_comb(ReadoutComb(tones=[]), 1.0, 100.0)
        self.assertEqual(wf.energy(), 0.0)

    def test_repeated_channels_rejected(self):
        with self.assertRaises(ValidationError):
            ReadoutComb(tones=[tone(), tone(offset=5.0)])

    def test_negative_amplitude_rejected(self):
        with self.assertRaises(ValidationError):
            tone(amplitude=-1.0)

    def test_window_shifts_time(self):
        wf = synthesize_comb(ReadoutComb(tones=[tone(offset=3.0)]), 1.0, 1000.0)
        part = wf.window(250, 500)
        self.assertEqual(len(part), 250)
        self.assertAlmostEqual(part.t0, 0.25)
        np.testing.assert_allclose(part.samples, wf.samples[250:500])
        self.assertEqual(part.components.shape, (1, 250))


class TestReflect(unittest.TestCase):
    """Cavity response of the feedline."""

    def setUp(self):
        self.dev = load_device()

    def test_steady_state_matches_reflection_coefficient(self):
        for label in self.dev.labels:
            for state in (GROUND, EXCITED):
                cfg = self.dev.channel(label)
                offset = self.dev.offset(label) + 1.7
                states = {other: GROUND for other in self.dev.labels}
                states[label] = state
                drive = synthesize_comb(ReadoutComb(tones=[tone(label, offset, duration=3.0)]), 3.0, 1000.0)
                out, _ = reflect(self.dev, states, drive)
                ratio = out.samples[-100:] / drive.samples[-100:]
                expected = reflection_coefficient(cfg, offset - resonance_offset(self.dev, label, state))
                np.testing.assert_allclose(ratio, expected, atol=1e-6)

    def test_readout_amplitude_sets_photon_number(self):
        """A tone at the bare cavity holds the target photons for either qubit state."""
        comb = build_readout_comb(self.dev, 2.5, 3.0)
        drive = synthesize_comb(comb, 3.0, 1000.0)
        for state in (GROUND, EXCITED):
            _, trajectory = reflect(self.dev, [state] * 4, drive)
            np.testing.assert_allclose(trajectory.final.photons, 2.5, rtol=1e-6)

    def test_steady_state_photons_formula(self):
        cfg = single_channel_device(kappa_ext=4.0).channel("Q1")
        # On resonance without internal loss: 4 eps^2 / (2 pi kappa).
        self.assertAlmostEqual(steady_state_photons(cfg, 1.5, 0.0), 4 * 1.5 ** 2 / (2 * np.pi * 4.0))

    def test_energy_conservation_lossless(self):
        dev = single_channel_device()
        for pulse in (tone(duration=1.0), tone(offset=3.0, phase=0.7, start=0.5, duration=1.2)):
            with self.subTest(offset=pulse.offset_freq):
                drive = synthesize_comb(ReadoutComb(tones=[pulse]), 4.0, 10000.0)
                out, trajectory = reflect(dev, [GROUND], drive)
                self.assertLess(trajectory.final.photons[0], 1e-12)
                self.assertAlmostEqual(out.energy() / drive.energy(), 1.0, delta=1e-6)

    def test_energy_error_is_second_order(self):
        dev = single_channel_device()
        errors = []
        for fs in (1000.0, 2000.0):
            drive = synthesize_comb(ReadoutComb(tones=[tone(duration=1.0)]), 4.0, fs)
            out, _ = reflect(dev, [GROUND], drive)
            errors.append(abs(out.energy() / drive.energy() - 1.0))
        self.assertLess(errors[0], 1e-4)
        self.assertLess(errors[1], 0.3 * errors[0])

    def test_linearity(self):
        drive = synthesize_comb(build_readout_comb(self.dev, 2.5, 0.6), 1.0, 1000.0)
        states = [GROUND, EXCITED, GROUND, EXCITED]
        out, _ = reflect(self.dev, states, drive)
        factor = 0.4 - 1.3j
        scaled, _ = reflect(self.dev, states, drive.scaled(factor))
        np.testing.assert_allclose(scaled.samples, factor * out.samples, atol=1e-12)

    def test_four_tone_superposition(self):
        """With identity leakage the comb reflects as the sum of its single-tone reflections."""
        comb = build_readout_comb(self.dev, 2.5, 0.8, phases={"Q3": 1.1})
        states = [EXCITED, GROUND, EXCITED, GROUND]
        together, _ = reflect(self.dev, states, synthesize_comb(comb, 1.0, 1000.0))
        parts = [reflect(self.dev, states, synthesize_comb(comb.subset([label]), 1.0, 1000.0))[0].samples
                 for label in comb.channels]
        np.testing.assert_allclose(together.samples, np.sum(parts, axis=0), atol=1e-12)

    def test_internal_loss_absorbs_energy(self):
        dev = single_channel_device(kappa_ext=2.0, kappa_int=2.0)
        drive = synthesize_comb(ReadoutComb(tones=[tone(duration=1.0)]), 4.0, 1000.0)
        out, _ = reflect(dev, [GROUND], drive)
        self.assertLess(out.energy(), 0.9 * drive.energy())

    def test_zero_drive_stays_in_vacuum(self):
        drive = synthesize_comb(ReadoutComb(tones=[tone(amplitude=0.0)]), 1.0, 1000.0)
        out, trajectory = reflect(single_channel_device(), [GROUND], drive)
        self.assertTrue(np.all(out.samples == 0))
        self.assertTrue(np.all(trajectory.amplitudes == 0))

    def test_piecewise_chaining(self):
        """Splitting a drive and carrying the cavity state over gives the same output."""
        comb = build_readout_comb(self.dev, 2.5, 1.0)
        drive = synthesize_comb(comb, 1.0, 1000.0)
        whole, _ = reflect(self.dev, [GROUND] * 4, drive)
        first, trajectory = reflect(self.dev, [GROUND] * 4, drive.window(0, 400))
        second, _ = reflect(self.dev, [GROUND] * 4, drive.window(400, 1000), initial=trajectory.final)
        np.testing.assert_allclose(np.concatenate([first.samples, second.samples]), whole.samples, atol=1e-12)

    def test_drive_without_components(self):
        """For a tone at zero offset the held-sample integrator is exact too."""
        dev = single_channel_device()
        drive = synthesize_comb(ReadoutComb(tones=[tone(duration=0.5)]), 1.0, 1000.0)
        with_tones, _ = reflect(dev, [GROUND], drive)
        bare, _ = reflect(dev, [GROUND], drive.without_components())
        np.testing.assert_allclose(bare.samples, with_tones.samples, atol=1e-12)

    def test_identity_leakage_isolates_cavities(self):
        drive = synthesize_comb(build_readout_comb(self.dev, 2.5, 1.0, ["Q4"]), 1.0, 1000.0)
        _, trajectory = reflect(self.dev, [GROUND] * 4, drive)
        self.assertTrue(np.all(trajectory.amplitudes[:, :3] == 0))
        self.assertGreater(trajectory.final.photons[3], 1.0)

    def test_leakage_drives_victim(self):
        leaky = self.dev.with_leakage("Q3", "Q4", 6.6)
        comb = build_readout_comb(self.dev, 2.5, 3.0, ["Q4"])
        _, trajectory = reflect(leaky, [GROUND] * 4, synthesize_comb(comb, 3.0, 1000.0))
        expected = spurious_photons(leaky, "Q3", comb.tones[0])
        self.assertAlmostEqual(trajectory.final.photons[2], expected, delta=1e-6 * expected)
        self.assertAlmostEqual(expected, 0.106, delta=0.005)

    def test_resolution_error(self):
        drive = synthesize_comb(ReadoutComb(tones=[tone()]), 1.0, 20.0)
        with self.assertRaises(ResolutionError):
            reflect(single_channel_device(), [GROUND], drive)

    def test_initial_state_rings_down(self):
        dev = single_channel_device()
        drive = synthesize_comb(ReadoutComb(tones=[tone(amplitude=0.0)]), 1.0, 1000.0)
        out, trajectory = reflect(dev, [GROUND], drive, initial=CavityState(np.array([1.0 + 0j])))
        self.assertGreater(out.energy(), 0.9)
        self.assertLess(trajectory.final.photons[0], 1e-4)


class TestReflectionFit(unittest.TestCase):

    def test_recovers_parameters(self):
        cfg = load_device().channel("Q1")
        freqs = np.linspace(-20, 20, 81)
        f0 = 0.99
        gammas = reflection_coefficient(cfg, freqs - f0)
        fit = fit_reflection(freqs, gammas)
        self.assertAlmostEqual(fit.resonance, f0, places=6)
        self.assertAlmostEqual(fit.kappa, 8.4, places=6)
        self.assertAlmostEqual(fit.kappa_int, 0.1, places=6)

    def test_too_few_points(self):
        with self.assertRaises(FitFailureError):
            fit_reflection([0, 1, 2], [1, 1, 1])


class TestReadoutComb(unittest.TestCase):

    def setUp(self):
        self.dev = load_device()

    def test_default_comb(self):
        comb = build_readout_comb(self.dev, 2.5, 1.0, phases={"Q2": 0.5})
        self.assertEqual(comb.channels, ["Q1", "Q2", "Q3", "Q4"])
        for t in comb.tones:
            self.assertAlmostEqual(t.offset_freq, self.dev.offset(t.channel))
        self.assertEqual(comb.tone("Q2").phase, 0.5)
        self.assertIsNone(comb.tone("Q9"))

    def test_per_channel_photons(self):
        comb = build_readout_comb(self.dev, {"Q1": 1.0, "Q2": 4.0}, 1.0, ["Q1", "Q2"])
        cfg = self.dev.channel("Q2")
        photons = steady_state_photons(cfg, comb.tone("Q2").amplitude, dispersive_shift(cfg))
        self.assertAlmostEqual(photons, 4.0)

    def test_subset_and_scaled(self):
        comb = build_readout_comb(self.dev, 2.5, 1.0)
        self.assertEqual(comb.subset(["Q3"]).channels, ["Q3"])
        scaled = comb.scaled(2.0)
        self.assertAlmostEqual(scaled.tone("Q1").amplitude, 2 * comb.tone("Q1").amplitude)

    def test_zero_photons(self):
        self.assertEqual(readout_amplitude(self.dev.channel("Q1"), 0.0), 0.0)


if __name__ == '__main__':
    unittest.main()
