import math
import os
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd

from src.dump import MAGIC, read_dump, write_csv, write_dump, write_field_dump, write_modulation_dump
from src.geometry import ChartId, ChartPoint, SlowTrajectory
from src.models import ModelId, ModelSpec
from src.modulation import ModulationState
from src.physical import FieldState, Grid


class TestDump(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_field_dump_layout(self):
        grid = Grid(16, 2 * math.pi, 1, 16)
        components = np.arange(2 * 16 * 16, dtype=float).reshape(2, 16, 16)
        state = FieldState(components, 0.25, 1e-3, grid, time=1.5)
        path = write_field_dump(os.path.join(self.test_dir, "m4.bmod"), ModelSpec(ModelId.KOLMOGOROV), state)

        with open(path, "rb") as f:
            raw = f.read()
        self.assertTrue(raw.startswith(MAGIC))
        self.assertEqual(len(raw), 5 + 5 * 4 + 3 * 8 + components.size * 8)

        header, data = read_dump(path)
        self.assertEqual((header.model_id, header.n_components, header.dimension, header.nx, header.ny),
                         (4, 2, 1, 16, 16))
        self.assertEqual((header.time, header.mu, header.eps), (1.5, 0.25, 1e-3))
        self.assertTrue(np.array_equal(data, components))

    def test_complex_amplitudes_split(self):
        amplitudes = (np.arange(8) + 1j * np.arange(8)[::-1]).reshape(1, 8)
        path = write_dump(os.path.join(self.test_dir, "gl.bmod"), 11, amplitudes, 0.0, 1.0, 0.0)
        header, data = read_dump(path)
        self.assertEqual(header.model_id, 11)
        self.assertEqual(header.n_components, 2)
        self.assertTrue(np.array_equal(data[0], amplitudes[0].real))
        self.assertTrue(np.array_equal(data[1], amplitudes[0].imag))

    def test_modulation_dump(self):
        grid = Grid(16, 40 * math.pi)
        slow = SlowTrajectory(ChartPoint(ChartId.K2, 0.3, -1.0))
        state = ModulationState(ModelSpec(ModelId.SWIFT_HOHENBERG), np.full(grid.shape, 0.5 + 0.25j), grid, slow,
                                tbar=0.5)
        header, data = read_dump(write_modulation_dump(os.path.join(self.test_dir, "amp.bmod"), state))
        self.assertEqual(header.model_id, 11)
        self.assertEqual(header.n_components, 2)
        self.assertAlmostEqual(header.mu, 0.09 * -0.5)
        self.assertTrue(np.all(data[1] == 0.25))

    def test_rejects_foreign_file(self):
        path = os.path.join(self.test_dir, "other.bin")
        with open(path, "wb") as f:
            f.write(b"NOPE")
        with self.assertRaises(ValueError):
            read_dump(path)

    def test_csv_is_byte_stable(self):
        frame = pd.DataFrame({"t": [0.0, 0.1], "mu": [-0.05, -0.0499], "sup_norm_u": [1e-6, 1.0000001e-6]})
        first = write_csv(os.path.join(self.test_dir, "a", "run.csv"), frame)
        second = write_csv(os.path.join(self.test_dir, "b", "run.csv"), frame)
        with open(first, "rb") as f1, open(second, "rb") as f2:
            a, b = f1.read(), f2.read()
        self.assertEqual(a, b)
        self.assertTrue(a.startswith(b"t,mu,sup_norm_u\n"))
        self.assertEqual(pd.read_csv(first)["sup_norm_u"].iloc[1], 1.0000001e-6)


if __name__ == '__main__':
    unittest.main()
