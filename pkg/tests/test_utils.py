"""
Tests for utils module.
"""

import unittest
import tempfile
import os
from unittest.mock import patch

import numpy as np

from muxsim.utils import (
    stream_rng,
    get_worker_count,
    validate_file_exists,
    ensure_output_dir,
    format_number,
    Stage,
    MuxSimError,
    ConfigError,
    FitFailureError
)


class TestUtils(unittest.TestCase):
    """Test cases for utility functions."""

    def test_stream_rng_is_reproducible(self):
        """Same key gives the same numbers."""
        a = stream_rng(42, 0, 7, Stage.READOUT_NOISE, 2).standard_normal(5)
        b = stream_rng(42, 0, 7, Stage.READOUT_NOISE, 2).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_stream_rng_keys_are_independent(self):
        """Changing any key component or the seed changes the stream."""
        base = stream_rng(42, 0, 7, Stage.READOUT_NOISE, 2).random()
        self.assertNotEqual(base, stream_rng(43, 0, 7, Stage.READOUT_NOISE, 2).random())
        self.assertNotEqual(base, stream_rng(42, 1, 7, Stage.READOUT_NOISE, 2).random())
        self.assertNotEqual(base, stream_rng(42, 0, 8, Stage.READOUT_NOISE, 2).random())
        self.assertNotEqual(base, stream_rng(42, 0, 7, Stage.HERALD_NOISE, 2).random())
        self.assertNotEqual(base, stream_rng(42, 0, 7, Stage.READOUT_NOISE, 3).random())

    def test_stream_rng_does_not_depend_on_other_streams(self):
        """Drawing from one stream leaves another untouched."""
        expected = stream_rng(1, 5, 5).random()
        other = stream_rng(1, 5, 4)
        other.random(1000)
        self.assertEqual(stream_rng(1, 5, 5).random(), expected)

    def test_stream_rng_accepts_64_bit_seed(self):
        value = stream_rng(2 ** 64 - 1, 0).random()
        self.assertTrue(0.0 <= value < 1.0)

    @patch.dict(os.environ, {'MUXSIM_THREADS': '4'})
    def test_get_worker_count_from_env(self):
        """Test reading the worker cap."""
        self.assertEqual(get_worker_count(), 4)

    @patch.dict(os.environ, {}, clear=True)
    def test_get_worker_count_default(self):
        with patch('muxsim.utils.load_dotenv'):
            self.assertEqual(get_worker_count(), 1)

    @patch.dict(os.environ, {'MUXSIM_THREADS': 'many'})
    def test_get_worker_count_invalid(self):
        """Non-integer values are config errors."""
        with self.assertRaises(ConfigError):
            get_worker_count()

    @patch.dict(os.environ, {'MUXSIM_THREADS': '0'})
    def test_get_worker_count_not_positive(self):
        with self.assertRaises(ConfigError):
            get_worker_count()

    def test_validate_file_exists(self):
        """Test file existence validation."""
        with tempfile.NamedTemporaryFile(delete=False) as temp_file:
            temp_path = temp_file.name
            temp_file.write(b"{}")

        try:
            self.assertTrue(validate_file_exists(temp_path))
            self.assertFalse(validate_file_exists("nonexistent_device.json"))
        finally:
            if os.path.exists(temp_path):
                os.unlink(temp_path)

    def test_ensure_output_dir_creates_nested(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            target = os.path.join(temp_dir, "a", "b")
            path = ensure_output_dir(target)
            self.assertTrue(path.is_dir())

    def test_format_number(self):
        """Numbers are formatted with fixed significant digits."""
        self.assertEqual(format_number(0.5), "0.5")
        self.assertEqual(format_number(1 / 3), "0.3333333333")
        self.assertEqual(format_number(12), "12")
        self.assertEqual(format_number(np.int64(3)), "3")
        self.assertEqual(format_number(True), "true")
        self.assertEqual(format_number(float("nan")), "nan")

    def test_exception_hierarchy(self):
        """Test custom exception hierarchy."""
        self.assertTrue(issubclass(ConfigError, MuxSimError))
        self.assertTrue(issubclass(FitFailureError, MuxSimError))
        self.assertTrue(issubclass(MuxSimError, Exception))


if __name__ == '__main__':
    unittest.main()
