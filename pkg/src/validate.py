"""
Validation of modulation approximations against direct simulations.

Amplitudes are mapped back to physical fields through the leading-order
ansatz, compared with direct runs in the sup-norm, and error or residual
sizes are regressed against delta on log-log axes.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import stats

from .dump import write_csv
from .errors import DelayNotObservedError, GridMismatchError
from .geometry import ChartId, ChartPoint, FrozenSlowFlow, SlowTrajectory
from .models import ModelId
from .modulation import ModulationState, evolve, evolve_across_charts, stepper_for
from .physical import FieldState, Grid, SolverConfig, initial_state, physical_system, simulate
from .spectra import brusselator_coefficients

NODE_TOL = 1e-9
TIME_TOL = 1e-9
CONFIDENCE = 0.95
REPORT_COLUMNS = ["delta", "eps", "max_error", "slope", "residual_slope", "t_takeoff", "mu_takeoff"]
VALIDITY_MODELS = (ModelId.SWIFT_HOHENBERG, ModelId.BRUSSELATOR)
VALIDITY_MOD_LENGTH = 8.0 * math.pi
MAX_MODULATION_DT = 0.01
DYNAMIC_AMPLITUDE = 0.5
DYNAMIC_FACTOR = 5.0


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    stderr: float
    interval: tuple

    def contains(self, low, high):
        return low <= self.slope <= high


@dataclass
class ErrorReport:
    times: list
    sup_errors: list
    fitted_slope: float = math.nan
    slope_interval: tuple = (math.nan, math.nan)
    residual_norms: list = field(default_factory=list)
    runs_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not all(math.isfinite(e) for e in self.sup_errors):
            raise ValueError("Error report contains non-finite sup errors")

    @property
    def max_error(self):
        return max(self.sup_errors) if self.sup_errors else 0.0

    def frame(self):
        return pd.DataFrame({"t": self.times, "sup_error": self.sup_errors}, columns=["t", "sup_error"])


def slow_radius(slow, tbar):
    """Chart radius r(tbar); constant for frozen flows."""
    if isinstance(slow, FrozenSlowFlow):
        return slow.r
    return slow.at(tbar).r


def slow_parameters(slow, tbar):
    if isinstance(slow, FrozenSlowFlow):
        return slow.r ** 2 * slow.mu_bar_value, 0.0
    return slow.global_params(tbar)


def _axis_values(n, length, points):
    """Trigonometric interpolation matrix for one axis of a full fft layout."""
    index = np.fft.fftfreq(n, 1.0 / n)
    k = 2.0 * np.pi / length * index
    phases = np.exp(1j * np.outer(points, k))
    # the Nyquist term is a cosine so real data stays real
    nyquist = np.abs(index) == n // 2
    phases[:, nyquist] = np.cos(np.outer(points, k[nyquist]))
    return phases / n


def evaluate_amplitude(values, grid, points, interpolate=True):
    """
    Periodic amplitude field on `grid` evaluated at the xbar `points` (one
    array per grid axis). On-node points are read off directly; others use
    Fourier interpolation.
    """
    points = [np.mod(p, grid.length) for p in points]
    nodes = [p / grid.dx for p in points]
    on_grid = all(np.all(np.abs(n - np.round(n)) <= NODE_TOL * max(1.0, float(np.max(np.abs(n))))) for n in nodes)
    if on_grid:
        index = tuple(np.round(n).astype(int) % grid.n_points for n in nodes)
        return values[index]
    if not interpolate:
        raise GridMismatchError("Physical nodes fall between modulation nodes and interpolation is disabled")
    hat = np.fft.fftn(values)
    if values.ndim == 1:
        return _axis_values(grid.n_points, grid.length, points[0].ravel()) @ hat
    lead, last = points
    rows = _axis_values(grid.n_points, grid.length, lead[:, 0])
    cols = _axis_values(grid.n_points, grid.length, last[0, :])
    return rows @ hat @ cols.T


def _check_periodic(m, physical_grid, r):
    ratio = r * physical_grid.length / m.grid.length
    if ratio < 1.0 - NODE_TOL or abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
        raise GridMismatchError(
            f"Physical box maps to xbar length {r * physical_grid.length:.6g}, "
            f"not a multiple of the modulation box {m.grid.length:.6g}"
        )


def reconstruct(model, m, physical_grid, time=None, interpolate=True):
    """
    Leading-order physical field r psi^(0) of a modulation state:

        M1  u = 2 r Re(A e^{ix})
        M2  (u, v) = 2 r Re(A phi e^{iat}), phi = (1, -1 + i/a)
        M3  (u, v) = 2 r Re(A_L e^{i(x - t)}, A_R e^{-i(x + t)})
        M4  (u, v) = r A (-sqrt(2) cos y, 1)

    with xbar = r x at the current chart radius.
    """
    r = slow_radius(m.slow, m.tbar)
    _check_periodic(m, physical_grid, r)
    time = m.slow.physical_time(m.tbar) if time is None else time
    mu, eps = slow_parameters(m.slow, m.tbar)
    coords = physical_grid.coordinates()
    x = coords[-1]

    if model.id is ModelId.KOLMOGOROV:
        # A depends on x only; evaluate on the x line and broadcast over y
        line = evaluate_amplitude(m.amplitudes[0], m.grid, [r * physical_grid.x], interpolate).real
        y = coords[0]
        amplitude = np.broadcast_to(line, physical_grid.shape)
        components = np.stack([-math.sqrt(2.0) * np.cos(y) * r * amplitude, r * amplitude])
        return FieldState(components, mu, eps, physical_grid, time)

    scaled = [r * c for c in coords]
    if model.id is ModelId.COUPLED_KS:
        shift = 0.0 if m.frame == "lab" else m.tbar - m.frame_origin
        left = evaluate_amplitude(m.amplitudes[0], m.grid, [scaled[-1] - shift], interpolate)
        right = evaluate_amplitude(m.amplitudes[1], m.grid, [scaled[-1] + shift], interpolate)
        components = np.stack([2.0 * r * np.real(left * np.exp(1j * (x - time))),
                               2.0 * r * np.real(right * np.exp(-1j * (x + time)))])
        return FieldState(components, mu, eps, physical_grid, time)

    amplitude = evaluate_amplitude(m.amplitudes[0], m.grid, scaled, interpolate)
    if model.id is ModelId.SWIFT_HOHENBERG:
        components = (2.0 * r * np.real(amplitude * np.exp(1j * x)))[None]
    else:
        phase = amplitude * np.exp(1j * model.a * time)
        phi2 = complex(-1.0, 1.0 / model.a)
        components = np.stack([2.0 * r * np.real(phase), 2.0 * r * np.real(phi2 * phase)])
    return FieldState(components, mu, eps, physical_grid, time)


def _records(trajectory):
    return trajectory.records if hasattr(trajectory, "records") else list(trajectory)


def approximation_error(model, direct, reconstructed):
    """Per-record sup-norm over all components of direct - reconstructed."""
    a, b = _records(direct), _records(reconstructed)
    if len(a) != len(b):
        raise GridMismatchError(f"Trajectories have {len(a)} and {len(b)} records")
    times, errors = [], []
    for ra, rb in zip(a, b):
        if ra.components.shape != rb.components.shape:
            raise GridMismatchError(f"Field shapes {ra.components.shape} and {rb.components.shape} differ")
        if abs(ra.time - rb.time) > TIME_TOL * max(1.0, abs(ra.time)):
            raise GridMismatchError(f"Record times {ra.time} and {rb.time} differ")
        times.append(ra.time)
        errors.append(float(np.max(np.abs(ra.components - rb.components))))
    return ErrorReport(times, errors, runs_metadata={"model": model.describe()})


def _time_derivative(values, h):
    """Fourth-order central differences at the interior records."""
    return (-values[4:] + 8.0 * values[3:-1] - 8.0 * values[1:-3] + values[:-4]) / (12.0 * h)


def residual(model, trajectory, cfg=None):
    """
    Residual du/dt - (L u + N(u, mu(t))) of the model PDE along an equally
    spaced trajectory, evaluated spectrally in space and by fourth-order
    differences in time. Returns one (t, L2 norm, sup norm) row per interior
    record.
    """
    records = _records(trajectory)
    if len(records) < 5:
        raise ValueError(f"Residual needs at least 5 records, got {len(records)}")
    times = np.array([r.time for r in records])
    steps = np.diff(times)
    h = float(steps[0])
    if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * max(1.0, h):
        raise ValueError("Residual needs equally spaced records")
    grid = records[0].grid
    system = physical_system(model, grid, cfg or SolverConfig.for_model(model))
    hats = np.stack([system.forward(r.components) for r in records])
    if model.id is ModelId.KOLMOGOROV:
        hats = np.stack([system.leray(hat) for hat in hats])
    derivative = _time_derivative(hats, h)
    rows = []
    for j, record in enumerate(records[2:-2]):
        res = system.inverse(derivative[j] - system.rhs(record))
        l2 = float(np.sqrt(np.sum(res ** 2) * grid.dx ** len(grid.shape)))
        rows.append({"t": record.time, "l2": l2, "sup": float(np.max(np.abs(res)))})
    return pd.DataFrame(rows, columns=["t", "l2", "sup"])


def delay_metric(model, trajectory, threshold):
    """First record where the sup-norm exceeds `threshold`: (t_takeoff, mu_at_takeoff)."""
    records = _records(trajectory)
    start = records[0]
    if start.mu >= 0:
        raise ValueError(f"Delay runs must start below onset, got mu(0)={start.mu}")
    if max(start.sup_norms()) >= threshold:
        raise ValueError(f"Initial sup-norm {max(start.sup_norms()):.3g} is already above the threshold")
    for record in records:
        if max(record.sup_norms()) > threshold:
            logging.info(f"{model.id.value} takes off at t={record.time:.6g}, mu={record.mu:.6g}")
            return record.time, record.mu
    raise DelayNotObservedError(
        f"Sup-norm stayed below {threshold} up to t={records[-1].time:.6g} (mu={records[-1].mu:.6g})"
    )


def scalar_delay_prediction(mu0, eps, amp0, threshold, rate_per_mu=1.0):
    """
    Take-off of x' = rate (mu0 + eps t) x from amp0 to threshold:
    mu* = sqrt(mu0^2 + 2 eps ln(threshold / amp0) / rate). Returns (t*, mu*).
    """
    if eps <= 0:
        if mu0 < 0:
            raise DelayNotObservedError("A frozen stable parameter never takes off")
        return math.log(threshold / amp0) / (rate_per_mu * mu0), mu0
    mu_star = math.sqrt(mu0 * mu0 + 2.0 * eps * math.log(threshold / amp0) / rate_per_mu)
    return (mu_star - mu0) / eps, mu_star


def growth_rate_per_mu(model):
    if model.id is ModelId.BRUSSELATOR:
        return brusselator_coefficients(model.a, model.d1, model.d2)[1].real
    return 1.0


def fit_scaling(deltas, values):
    """Log-log regression of values against deltas with a 95% Student-t interval on the slope."""
    deltas, values = np.asarray(deltas, dtype=float), np.asarray(values, dtype=float)
    if len(deltas) < 2 or np.any(deltas <= 0) or np.any(values <= 0):
        raise ValueError("Scaling fits need at least two positive (delta, value) pairs")
    fit = stats.linregress(np.log(deltas), np.log(values))
    if len(deltas) > 2:
        half = stats.t.ppf(0.5 + CONFIDENCE / 2.0, len(deltas) - 2) * fit.stderr
        interval = (fit.slope - half, fit.slope + half)
    else:
        interval = (math.nan, math.nan)
    logging.info(f"Fitted slope {fit.slope:.4f} (95% interval {interval[0]:.4f} .. {interval[1]:.4f})")
    return ScalingFit(float(fit.slope), float(fit.intercept), float(fit.stderr), interval)


def validity_grids(model, delta, mod_points=64, mod_length=VALIDITY_MOD_LENGTH):
    """Modulation box of length mod_length and the physical box it covers at r = delta."""
    physical_length = mod_length / delta
    wavelengths = physical_length / (2.0 * math.pi)
    n_points = 1 << max(4, math.ceil(math.log2(8.0 * wavelengths)))
    if model.id is ModelId.SWIFT_HOHENBERG:
        physical = Grid.for_model(model, n_points, physical_length)
    else:
        physical = Grid(n_points, physical_length, 1, 0)
    return Grid(mod_points, mod_length), physical


def validity_profile(grid):
    """Default modulated initial amplitude 0.5 + 0.3 cos(2 pi xbar / L)."""
    return 0.5 + 0.3 * np.cos(2.0 * np.pi * grid.x / grid.length) + 0j


def static_validity_run(model, delta, cfg=None, mod_points=64, mod_length=VALIDITY_MOD_LENGTH, profile=None):
    """
    Direct run from the reconstructed ansatz at mu = delta^2, eps = 0, over
    t in [0, delta^-2], compared record by record with the reconstructed
    modulation trajectory.
    """
    if model.id not in VALIDITY_MODELS:
        raise ValueError(f"Static validity runs cover m1 and m2, not {model.id.value}")
    mod_grid, physical = validity_grids(model, delta, mod_points, mod_length)
    slow = FrozenSlowFlow(1.0, r=delta, beta=model.beta)
    amplitudes = profile if profile is not None else validity_profile(mod_grid)
    state = ModulationState(model, amplitudes, mod_grid, slow)
    cfg = cfg or SolverConfig.for_model(model)
    direct = simulate(model, reconstruct(model, state, physical, time=0.0), delta ** -2, cfg)

    stepper = stepper_for(model)
    reconstructed = [reconstruct(model, state, physical, time=direct.records[0].time)]
    for previous, record in zip(direct.records, direct.records[1:]):
        span = delta ** 2 * (record.time - previous.time)
        n_steps = max(1, math.ceil(span / MAX_MODULATION_DT - 1e-9))
        state = evolve(state, stepper, span, n_steps).final
        reconstructed.append(reconstruct(model, state, physical, time=record.time))
    report = approximation_error(model, direct, reconstructed)
    report.runs_metadata.update({"delta": delta, "eps": 0.0, "physical_points": physical.n_points})
    logging.info(f"{model.id.value} delta={delta}: max error {report.max_error:.4g}")
    return report


def static_validity_sweep(model, deltas, cfg=None, mod_points=64):
    reports = [static_validity_run(model, d, cfg, mod_points) for d in deltas]
    fit = fit_scaling(deltas, [r.max_error for r in reports])
    for report in reports:
        report.fitted_slope = fit.slope
        report.slope_interval = fit.interval
    return reports, fit


def dynamic_validity_run(model, eps, mu0=-0.04, amplitude=DYNAMIC_AMPLITUDE, cfg=None, t_end=None,
                         dt=MAX_MODULATION_DT, k1_to_k2=1.0, k2_to_k3=1.0):
    """
    Drifting-parameter counterpart of static_validity_run. An xbar-homogeneous
    amplitude enters through K1 at mu0 < 0 and is handed over K1 -> K2 -> K3
    while mu sweeps to -mu0 (or up to t_end). The direct run starts from the
    reconstructed field and both are compared record by record.

    The report's metadata carries max_r, the largest chart radius met.
    """
    if model.id not in VALIDITY_MODELS:
        raise ValueError(f"Dynamic validity runs cover m1 and m2, not {model.id.value}")
    if mu0 >= 0 or eps <= 0:
        raise ValueError(f"Dynamic validity runs start below onset with eps > 0, got mu0={mu0}, eps={eps}")
    r0 = math.sqrt(-mu0)
    slow = SlowTrajectory(ChartPoint(ChartId.K1, r0, eps / r0 ** (2 + model.beta), model.beta))
    physical = _small_grid(model)
    # a homogeneous amplitude fits every xbar box, so the box follows r
    state = ModulationState(model, np.full(16, amplitude + 0j), Grid(16, r0 * physical.length), slow)
    cfg = cfg or SolverConfig.for_model(model, record_stride=100)
    t_end = t_end if t_end is not None else -2.0 * mu0 / eps
    t_end = cfg.dt * math.ceil(t_end / cfg.dt - 1e-9)
    direct = simulate(model, _matched(model, state, physical, 0.0), t_end, cfg)

    stepper = stepper_for(model)
    reconstructed = [_matched(model, state, physical, direct.records[0].time)]
    max_r = r0
    for previous, record in zip(direct.records, direct.records[1:]):
        state = evolve_across_charts(state, stepper, record.time - previous.time, dt,
                                     k1_to_k2=k1_to_k2, k2_to_k3=k2_to_k3).final
        max_r = max(max_r, slow_radius(state.slow, state.tbar))
        reconstructed.append(_matched(model, state, physical, record.time))
    report = approximation_error(model, direct, reconstructed)
    report.runs_metadata.update({"eps": eps, "mu0": mu0, "max_r": max_r, "final_chart": state.chart.value})
    logging.info(f"{model.id.value} eps={eps:g}: dynamic max error {report.max_error:.4g}, max r {max_r:.4g}")
    return report


def _matched(model, state, physical, time):
    r = slow_radius(state.slow, state.tbar)
    return reconstruct(model, replace(state, grid=Grid(state.grid.n_points, r * physical.length)), physical, time)


def dynamic_error_bound(fit, max_r, factor=DYNAMIC_FACTOR):
    """factor * max_r^2 * C with C the constant of the static fit error ~ C delta^slope."""
    return factor * max_r ** 2 * math.exp(fit.intercept)


def residual_scaling(model, deltas, n_records=5):
    """
    Residual sup-norm of the reconstructed static GL equilibrium A = 1/sqrt(3)
    at mu = delta^2 (M1). The first neglected order makes it scale like delta^3.
    """
    values = []
    for delta in deltas:
        grid = Grid(32, 2.0 * math.pi)
        mod_grid = Grid(16, delta * grid.length)
        state = ModulationState(model, np.full(mod_grid.shape, 1.0 / math.sqrt(3.0)), mod_grid,
                                FrozenSlowFlow(1.0, r=delta, beta=model.beta))
        records = [reconstruct(model, state, grid, time=0.1 * j) for j in range(n_records)]
        values.append(float(residual(model, records)["sup"].max()))
    return values, fit_scaling(deltas, values)


def _small_grid(model):
    """One critical wavelength, for runs with an xbar-homogeneous amplitude."""
    return Grid(32, 2.0 * math.pi) if model.id is ModelId.SWIFT_HOHENBERG else Grid(16, 2.0 * math.pi)


def delay_run(model, eps, mu0=-0.05, amp0=1e-6, threshold=1e-2, cfg=None, kind="mode", rng=None):
    """
    Slow passage from mu0 with sup-norm amp0 at t = 0 (the critical mode, or a
    seeded random perturbation when kind="random"). Returns (t_takeoff, mu_takeoff, predicted mu*).
    """
    t_pred, mu_pred = scalar_delay_prediction(mu0, eps, amp0, threshold, growth_rate_per_mu(model))
    grid = _small_grid(model)
    cfg = cfg or SolverConfig.for_model(model, record_stride=10)
    initial = initial_state(model, grid, mu=mu0, eps=eps, kind=kind, amplitude=amp0, rng=rng)
    t_end = cfg.dt * math.ceil(1.5 * t_pred / cfg.dt)
    run = simulate(model, initial, t_end, cfg)
    t_takeoff, mu_takeoff = delay_metric(model, run, threshold)
    return t_takeoff, mu_takeoff, mu_pred


def report_frame(rows):
    """Validation summary rows as a DataFrame with the standard report columns."""
    return pd.DataFrame([{c: row.get(c, math.nan) for c in REPORT_COLUMNS} for row in rows], columns=REPORT_COLUMNS)


def write_plot_data(path, x, y, names=("x", "y")):
    """Two-column series for external plotting."""
    frame = pd.DataFrame({names[0]: np.asarray(x, dtype=float), names[1]: np.asarray(y, dtype=float)},
                         columns=list(names))
    return write_csv(path, frame)
