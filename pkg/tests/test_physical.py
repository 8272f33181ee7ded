import math
import unittest

import numpy as np

from src.errors import GridMismatchError, RangeError, SolverBlowUpError
from src.models import ModelId, ModelSpec
from src.physical import (
    FieldState, Grid, SolverConfig, initial_state, kolmogorov_ansatz, linear_growth_probe, physical_system, pressure,
    simulate, step,
)
from src.spectra import dispersion

M1 = ModelSpec(ModelId.SWIFT_HOHENBERG)
M2 = ModelSpec(ModelId.BRUSSELATOR, a=1.0, d1=1.0, d2=0.5)
M3 = ModelSpec(ModelId.COUPLED_KS)
M4 = ModelSpec(ModelId.KOLMOGOROV)


class TestGrid(unittest.TestCase):
    def test_power_of_two(self):
        with self.assertRaises(GridMismatchError):
            Grid(24, 2 * math.pi)
        with self.assertRaises(GridMismatchError):
            Grid(8, 2 * math.pi)

    def test_commensurate_length(self):
        self.assertEqual(Grid.for_model(M1, 64, 4 * math.pi).length, 4 * math.pi)
        with self.assertRaises(GridMismatchError):
            Grid.for_model(M3, 64, 10.0)

    def test_layouts(self):
        self.assertEqual(Grid(32, 2 * math.pi).spectral_shape, (17,))
        self.assertEqual(Grid(32, 2 * math.pi, 2).spectral_shape, (32, 17))
        kolmogorov = Grid.for_model(M4, 64)
        self.assertEqual(kolmogorov.shape, (32, 64))
        self.assertAlmostEqual(kolmogorov.y[0], -math.pi)

    def test_dealias_mask(self):
        mask = Grid(32, 2 * math.pi).dealias_mask()
        self.assertTrue(mask[10])
        self.assertFalse(mask[11])


class TestStep(unittest.TestCase):
    def test_zero_state_is_fixed(self):
        for m, grid in ((M1, Grid(32, 2 * math.pi)), (M2, Grid(16, 2 * math.pi)),
                        (M3, Grid(32, 2 * math.pi)), (M4, Grid(16, 2 * math.pi, 1, 32))):
            cfg = SolverConfig.for_model(m)
            state = initial_state(m, grid, mu=0.1, eps=0.0, kind="zero")
            for _ in range(5):
                state = step(m, state, cfg)
            self.assertEqual(np.max(np.abs(state.components)), 0.0, m.id.value)

    def test_linearized_swift_hohenberg_growth(self):
        grid = Grid(32, 2 * math.pi)
        x = grid.x
        state = FieldState(1e-6 * np.cos(x)[None], 0.04, 0.0, grid)
        cfg = SolverConfig(dt=0.01, nonlinear=False)
        for _ in range(100):
            state = step(M1, state, cfg)
        ratio = np.max(np.abs(state.components)) / 1e-6
        self.assertAlmostEqual(ratio / math.exp(0.04), 1.0, delta=1e-6)

    def test_imex_scheme_growth(self):
        grid = Grid(32, 2 * math.pi)
        state = FieldState(1e-6 * np.cos(grid.x)[None], 0.04, 0.0, grid)
        cfg = SolverConfig(dt=0.01, scheme="imex-bdf2", nonlinear=False)
        for _ in range(100):
            state = step(M1, state, cfg)
        self.assertIsNotNone(state.history)
        ratio = np.max(np.abs(state.components)) / 1e-6
        self.assertAlmostEqual(ratio / math.exp(0.04), 1.0, delta=1e-5)

    def test_mu_is_exact(self):
        grid = Grid(32, 2 * math.pi)
        state = initial_state(M1, grid, mu=-0.05, eps=1e-3, kind="mode", amplitude=1e-4)
        run = simulate(M1, state, 2.0, SolverConfig(dt=0.01, record_stride=7))
        for record in run.records:
            self.assertLessEqual(abs(record.mu - (-0.05 + 1e-3 * record.time)), 1e-15)
        self.assertAlmostEqual(run.final.time, 2.0, places=14)

    def test_kolmogorov_forcing_response(self):
        grid = Grid(16, 2 * math.pi, 1, 32)
        eps = 1e-3
        state = initial_state(M4, grid, mu=0.0, eps=eps, kind="zero")
        run = simulate(M4, state, 1.0, SolverConfig(dt=0.002, nonlinear=False, record_stride=100))
        y = grid.coordinates()[0]
        expected = -eps * (1.0 - math.exp(-1.0)) * np.sin(y)
        u, v = run.final.components
        self.assertLessEqual(np.max(np.abs(u - expected)), 1e-10)
        self.assertLessEqual(np.max(np.abs(v)), 1e-14)

    def test_kolmogorov_constraints_hold(self):
        grid = Grid(32, 2 * math.pi / 0.1, 1, 32)
        state = initial_state(M4, grid, mu=0.02, eps=1e-3, kind="random", amplitude=0.05,
                              rng=np.random.default_rng(3))
        cfg = SolverConfig(dt=0.002, record_stride=20)
        run = simulate(M4, state, 0.4, cfg)
        system = physical_system(M4, grid, cfg)
        for record in run.records:
            hat = system.forward(record.components)
            self.assertLessEqual(np.max(np.abs(system.divergence(hat))), 1e-10)
            self.assertLessEqual(np.max(np.abs(record.components[0].mean(axis=0))), 1e-12)

    def test_kolmogorov_keeps_cross_flow_mass(self):
        grid = Grid(16, 2 * math.pi / 0.1, 1, 32)
        fields = kolmogorov_ansatz(grid, np.full(grid.shape, 0.02))
        self.assertAlmostEqual(fields[1].mean(), 0.02, places=14)
        state = FieldState(fields, 0.0, 0.0, grid)
        run = simulate(M4, state, 0.2, SolverConfig(dt=0.002, record_stride=50))
        for record in run.records:
            self.assertAlmostEqual(record.components[1].mean(), 0.02, places=12)

    def test_pressure_of_rest_state(self):
        grid = Grid(16, 2 * math.pi, 1, 32)
        state = initial_state(M4, grid, mu=0.0, eps=1e-3, kind="zero")
        p = pressure(M4, state)
        self.assertEqual(p.shape, grid.shape)
        self.assertLessEqual(np.max(np.abs(p)), 1e-15)

    def test_blow_up_reports_time(self):
        grid = Grid(32, 2 * math.pi)
        state = FieldState(1e3 * np.cos(grid.x)[None], 0.0, 0.0, grid)
        cfg = SolverConfig(dt=0.01)
        with np.errstate(all="ignore"):
            with self.assertRaises(SolverBlowUpError) as ctx:
                for _ in range(50):
                    state = step(M1, state, cfg)
        self.assertIsNotNone(ctx.exception.time)

    def test_fourth_order_convergence(self):
        grid = Grid(32, 2 * math.pi)
        u0 = 0.3 * np.cos(grid.x) + 0.1 * np.cos(2 * grid.x)
        initial = FieldState(u0[None], 0.2, 0.0, grid)

        def final(dt):
            return simulate(M1, initial, 10.0, SolverConfig(dt=dt, record_stride=1000)).final.components

        reference = final(0.00625)
        coarse = np.max(np.abs(final(0.1) - reference))
        fine = np.max(np.abs(final(0.05) - reference))
        self.assertGreaterEqual(coarse / fine, 8.0)


class TestSimulate(unittest.TestCase):
    def test_zero_trajectory(self):
        grid = Grid(32, 2 * math.pi)
        run = simulate(M3, initial_state(M3, grid, kind="zero"), 1.0, SolverConfig(dt=0.01, record_stride=10))
        self.assertEqual(len(run.records), 11)
        for record in run.records:
            self.assertEqual(np.max(np.abs(record.components)), 0.0)

    def test_deterministic(self):
        grid = Grid(64, 4 * math.pi)
        state = initial_state(M1, grid, mu=0.01, kind="random", amplitude=1e-3, rng=np.random.default_rng(7))
        cfg = SolverConfig(dt=0.01, record_stride=25)
        a = simulate(M1, state, 1.0, cfg)
        b = simulate(M1, state, 1.0, cfg)
        for ra, rb in zip(a.records, b.records):
            self.assertTrue(np.array_equal(ra.components, rb.components))

    def test_frame_columns(self):
        grid = Grid(16, 2 * math.pi)
        run = simulate(M2, initial_state(M2, grid, mu=0.01, kind="homogeneous"), 0.1, SolverConfig(dt=0.01))
        frame = run.frame()
        self.assertEqual(list(frame.columns), ["t", "mu", "sup_norm_u", "sup_norm_v"])
        self.assertEqual(len(frame), 2)

    def test_rejects_backwards_run(self):
        grid = Grid(16, 2 * math.pi)
        with self.assertRaises(ValueError):
            simulate(M1, initial_state(M1, grid, kind="zero"), 0.0, SolverConfig())

    def test_saturated_swift_hohenberg_pattern(self):
        delta = 0.1
        grid = Grid(64, 4 * math.pi)
        state = initial_state(M1, grid, mu=delta ** 2, eps=0.0, kind="mode", amplitude=0.05)
        run = simulate(M1, state, 200.0, SolverConfig(dt=0.01, record_stride=1000))
        expected = 2.0 * delta / math.sqrt(3.0)
        self.assertAlmostEqual(run.final.sup_norms()[0] / expected, 1.0, delta=0.15)

    def test_brusselator_hopf_frequency(self):
        grid = Grid(16, 2 * math.pi)
        state = initial_state(M2, grid, mu=0.01, eps=0.0, kind="homogeneous", amplitude=1e-3)
        run = simulate(M2, state, 60.0, SolverConfig(dt=0.01, record_stride=1))
        u = np.array([r.components[0, 0] for r in run.records])
        t = run.times
        ups = np.nonzero((u[:-1] < 0) & (u[1:] >= 0))[0]
        crossings = t[ups] - u[ups] * (t[ups + 1] - t[ups]) / (u[ups + 1] - u[ups])
        omega = 2 * math.pi / np.mean(np.diff(crossings))
        self.assertAlmostEqual(omega, M2.a, delta=0.05 * M2.a)


class TestLinearGrowthProbe(unittest.TestCase):
    def test_swift_hohenberg_critical_mode(self):
        self.assertLessEqual(abs(linear_growth_probe(M1, 1.0, 0.0).rate), 1e-8)

    def test_coupled_ks_rate(self):
        self.assertAlmostEqual(linear_growth_probe(M3, 1.0, 0.01).rate, 0.01, delta=1e-6)

    def test_matches_dispersion(self):
        samples = {
            M1: [(0.8, 0.02), (1.1, -0.03), (1.0, 0.05)],
            M2: [(0.0, 0.01), (0.3, -0.05), (0.7, 0.02)],
            M3: [(0.9, 0.0), (1.2, 0.04)],
        }
        for m, points in samples.items():
            for xi, mu in points:
                measured = float(linear_growth_probe(m, xi, mu))
                self.assertAlmostEqual(measured, dispersion(m, xi, mu).leading.real, delta=1e-6,
                                       msg=f"{m.id.value} xi={xi} mu={mu}")

    def test_two_dimensional_brusselator(self):
        m = ModelSpec(ModelId.BRUSSELATOR, a=1.0, d1=1.0, d2=0.5, dimension=2)
        measured = linear_growth_probe(m, 0.5, 0.01).rate
        self.assertAlmostEqual(measured, dispersion(M2, 0.5, 0.01).leading.real, delta=1e-6)

    def test_kolmogorov_long_wave(self):
        measured = linear_growth_probe(M4, 0.05, 0.0)
        self.assertFalse(measured.reduced_precision)
        self.assertAlmostEqual(measured.rate / -1.875e-5, 1.0, delta=0.1)

    def test_kolmogorov_needs_nonzero_wavenumber(self):
        with self.assertRaises(RangeError):
            linear_growth_probe(M4, 0.0, 0.0)

    def test_fast_decay_is_flagged(self):
        measured = linear_growth_probe(M1, 2.0, 0.0, duration=5.0)
        self.assertTrue(measured.reduced_precision)
        self.assertAlmostEqual(measured.rate, -9.0, delta=1e-6)


if __name__ == '__main__':
    unittest.main()
