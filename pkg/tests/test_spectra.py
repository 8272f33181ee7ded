import math
import unittest

import numpy as np

from src.errors import NoSignChangeError, RangeError
from src.geometry import ChartId
from src.models import ModelId, ModelSpec
from src.spectra import (
    BifurcationKind, brusselator_coefficients, chart_linear_spectrum, classify, dispersion, dispersion_frame,
    group_velocity, kind_from_critical, kolmogorov_leading_mode, kolmogorov_series, printed_band_estimate,
    symbol_matrix, unstable_band,
)

M1 = ModelSpec(ModelId.SWIFT_HOHENBERG)
M2 = ModelSpec(ModelId.BRUSSELATOR, a=1.0, d1=1.0, d2=0.5)
M3 = ModelSpec(ModelId.COUPLED_KS)
M4 = ModelSpec(ModelId.KOLMOGOROV)


class TestDispersion(unittest.TestCase):
    def test_swift_hohenberg(self):
        self.assertEqual(dispersion(M1, 1.0, 0.0).leading, 0.0)
        self.assertEqual(dispersion(M1, 0.0, 0.0).leading, -1.0)

    def test_brusselator_hopf_pair(self):
        values = dispersion(ModelSpec(ModelId.BRUSSELATOR, 1.0, 1.0, 1.0), 0.0, 0.0).eigenvalues
        self.assertAlmostEqual(values[0], -1j, places=14)
        self.assertAlmostEqual(values[1], 1j, places=14)

    def test_coupled_ks_ordering(self):
        values = dispersion(M3, 1.0, 0.0).eigenvalues
        self.assertEqual(values, (-1j, 1j))

    def test_matches_brute_force_eigensolve(self):
        rng = np.random.default_rng(1)
        for m in (M1, M2, M3, M4):
            for _ in range(50):
                xi = rng.uniform(-0.5, 0.5) if m is M4 else rng.uniform(-2.0, 2.0)
                mu = rng.uniform(-0.25, 0.25)
                method = "numeric" if m is M4 else "series"
                got = np.array(dispersion(m, xi, mu, method).eigenvalues)
                brute = np.linalg.eigvals(symbol_matrix(m, xi, mu))
                brute = brute[np.lexsort((brute.imag, -brute.real))]
                self.assertLessEqual(np.max(np.abs(got[:2] - brute[:2])), 1e-10)

    def test_conjugate_symmetry(self):
        for m in (M1, M2, M3):
            for xi in (0.3, 0.9, 1.4):
                for mu in (-0.1, 0.05):
                    plus = dispersion(m, xi, mu).leading
                    minus = dispersion(m, -xi, mu).leading
                    self.assertAlmostEqual(plus.real, minus.real, places=12)

    def test_kolmogorov_series_range(self):
        with self.assertRaises(RangeError):
            dispersion(M4, 0.6, 0.0)

    def test_kolmogorov_conserved_mode_pinned(self):
        for r_prime in np.linspace(-0.5, 0.5, 11):
            self.assertEqual(dispersion(M4, 0.0, r_prime).leading, 0.0)
            self.assertLessEqual(abs(dispersion(M4, 0.0, r_prime, "numeric").leading), 1e-8)

    def test_kolmogorov_oracle_matches_series(self):
        for xi in (0.02, 0.05, 0.1):
            numeric = dispersion(M4, xi, 0.0, "numeric").leading.real
            series = kolmogorov_series(xi, 0.0)
            self.assertAlmostEqual(series, -3.0 * xi ** 4, places=14)
            self.assertLessEqual(abs(numeric - series), 10.0 * xi ** 6)

    def test_kolmogorov_leading_mode_normalized(self):
        value, psi, modes = kolmogorov_leading_mode(0.05, 0.0)
        self.assertAlmostEqual(psi[list(modes).index(0)], 1.0)
        self.assertLess(abs(value.real + 3.0 * 0.05 ** 4), 1e-6)

    def test_monotone_onset(self):
        for m in (M1, M2, M3):
            xi_c = classify(m).xi_c
            for mu in np.linspace(-0.25, 0.25, 101):
                growth = dispersion(m, xi_c, mu).leading.real
                if mu < 0:
                    self.assertLess(growth, 0)
                elif mu > 0:
                    self.assertGreater(growth, 0)


class TestUnstableBand(unittest.TestCase):
    def test_swift_hohenberg_closed_form(self):
        low, high = unstable_band(M1, 0.1)
        self.assertAlmostEqual(low, math.sqrt(0.9), delta=1e-10)
        self.assertAlmostEqual(high, math.sqrt(1.1), delta=1e-10)

    def test_swift_hohenberg_asymptotics(self):
        for delta in (0.05, 0.1, 0.2):
            low, high = unstable_band(M1, delta)
            self.assertLessEqual(abs(low - (1 - delta / 2)), 0.6 * delta ** 2)
            self.assertLessEqual(abs(high - (1 + delta / 2)), 0.6 * delta ** 2)

    def test_edges_are_neutral(self):
        for m in (M1, M2, M3, M4):
            for delta in (0.05, 0.1, 0.2):
                for edge in unstable_band(m, delta):
                    self.assertLessEqual(abs(dispersion(m, edge, delta ** 2).leading.real), 1e-9)

    def test_brusselator_band(self):
        delta = 0.1
        _, high = unstable_band(M2, delta)
        self.assertAlmostEqual(high, delta * math.sqrt(2.0 / 1.5), delta=0.05 * delta)

    def test_kolmogorov_band_matches_series_root(self):
        for delta in (0.05, 0.1, 0.2):
            low, high = unstable_band(M4, delta)
            reynolds = math.sqrt(2.0) + delta ** 2
            root = math.sqrt((reynolds ** 2 / 2 - 1) / (reynolds ** 2 * (1 + reynolds ** 2 / 4)))
            self.assertAlmostEqual(high, root, delta=1e-10)
            self.assertAlmostEqual(low, -high)
            self.assertLessEqual(abs(high - delta * (math.sqrt(2.0) / 3.0) ** 0.5), delta ** 2)

    def test_printed_estimate_is_reported_only(self):
        low, high = printed_band_estimate(M2, 0.1)
        self.assertAlmostEqual(high, 2.0 / 1.5 * 0.1)
        self.assertAlmostEqual(low, -high)
        np.testing.assert_allclose(printed_band_estimate(M1, 0.2), (0.9, 1.1))

    def test_band_shrinks_to_critical_point(self):
        low, high = unstable_band(M1, 1e-4)
        self.assertAlmostEqual(low, math.sqrt(1.0 - 1e-4), delta=1e-10)
        self.assertAlmostEqual(high, math.sqrt(1.0 + 1e-4), delta=1e-10)
        self.assertLess(high - low, 2e-4)

    def test_invalid_delta(self):
        with self.assertRaises(RangeError):
            unstable_band(M1, 0.0)


class TestClassification(unittest.TestCase):
    def test_classify_models(self):
        self.assertEqual(classify(M1).kind, BifurcationKind.TURING)
        self.assertEqual(classify(M1).xi_c, 1.0)
        data = classify(ModelSpec(ModelId.BRUSSELATOR, a=2.0, d1=1.0, d2=0.5))
        self.assertEqual((data.kind, data.omega_c), (BifurcationKind.HOPF, 2.0))
        self.assertEqual(classify(M3).omega_c, -1.0)
        self.assertEqual(classify(M4).kind, BifurcationKind.LONG_WAVE_CONSERVED)

    def test_kind_consistent_with_critical_data(self):
        for m in (M1, M2, M3, M4):
            data = classify(m)
            conserved = m is M4
            self.assertEqual(kind_from_critical(data.xi_c, data.omega_c, conserved), data.kind)

    def test_group_velocity(self):
        self.assertAlmostEqual(group_velocity(M3), 1.0, places=8)
        self.assertAlmostEqual(group_velocity(M1), 0.0, places=8)

    def test_brusselator_coefficients(self):
        c1, c2, c3 = brusselator_coefficients(1.0, 1.0, 0.5)
        self.assertAlmostEqual(c1, 0.75 - 0.25j)
        self.assertAlmostEqual(c2, 1.0)
        self.assertAlmostEqual(c3, 1.5 + 1j / 6.0)

    def test_chart_spectrum_improved_hyperbolicity(self):
        self.assertAlmostEqual(chart_linear_spectrum(M1, ChartId.K1, 0.0, 0.5), -0.75)
        self.assertAlmostEqual(chart_linear_spectrum(M1, ChartId.K2, 0.5, 2.0), 1.0)
        self.assertAlmostEqual(chart_linear_spectrum(M1, ChartId.K3, 0.0, 0.5), 0.75)
        self.assertAlmostEqual(chart_linear_spectrum(M4, ChartId.K1, 1.0, 0.5), 0.25 - 3.0 - math.sqrt(2.0))


class TestDispersionFrame(unittest.TestCase):
    def test_columns(self):
        frame = dispersion_frame(M1, 0.01, np.linspace(0.0, 2.0, 5))
        self.assertEqual(list(frame.columns), ["xi", "re_lambda1", "im_lambda1", "re_lambda2", "im_lambda2"])
        self.assertEqual(len(frame), 5)
        self.assertTrue(np.isnan(frame["re_lambda2"]).all())


if __name__ == '__main__':
    unittest.main()
