"""
Pseudospectral direct solvers for the four fast-slow model PDEs

    M1  u_t = -(1 + dx^2)^2 u + mu u - u^3
    M2  shifted Brusselator with the -eps (1 + a^2)/a forcing in v
    M3  coupled Kuramoto-Sivashinsky pair with mirrored advection
    M4  Kolmogorov perturbation U' on x periodic, y in [-pi, pi)

on periodic boxes, with mu(t) = mu(0) + eps t integrated exactly. The stiff
linear part is handled in Fourier space by ETD-RK4 (default) or IMEX-BDF2.
"""
import functools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import stats

from .errors import ConstraintViolationError, GridMismatchError, RangeError, SolverBlowUpError
from .integrators import ETDRK4, IMEXBDF2
from .models import ModelId, ModelSpec, R_STAR
from .spectra import kolmogorov_leading_mode, kolmogorov_series, symbol_matrix

SCHEMES = ("etdrk4", "imex-bdf2")
DEFAULT_DT = {
    ModelId.SWIFT_HOHENBERG: 0.01,
    ModelId.BRUSSELATOR: 0.01,
    ModelId.COUPLED_KS: 0.01,
    ModelId.KOLMOGOROV: 0.002,
}
DEFAULT_POINTS = 256
DEFAULT_LENGTH = 32.0 * math.pi
DEFAULT_CROSS_POINTS = 32
KOLMOGOROV_DELTA = 0.2
COMPONENT_NAMES = {
    ModelId.SWIFT_HOHENBERG: ("u",),
    ModelId.BRUSSELATOR: ("u", "v"),
    ModelId.COUPLED_KS: ("u", "v"),
    ModelId.KOLMOGOROV: ("u", "v"),
}

DIVERGENCE_TOL = 1e-10
MEAN_FLOW_TOL = 1e-12
PROBE_DURATION = 5.0
PROBE_AMPLITUDE = 1e-6
PROBE_FLOOR = 1e-14


def kolmogorov_default_length(delta=KOLMOGOROV_DELTA):
    """40 pi / xi_hat with xi_hat the most unstable long-wave mode at R' = delta^2."""
    reynolds = R_STAR + delta * delta
    r2 = reynolds * reynolds
    a, b = r2 / 2.0 - 1.0, r2 * (1.0 + r2 / 4.0)
    xi_hat = math.sqrt(a / (2.0 * b))
    logging.debug(f"Kolmogorov most unstable mode {xi_hat:.6g} (growth {kolmogorov_series(xi_hat, delta ** 2):.3g})")
    return 40.0 * math.pi / xi_hat


@dataclass(frozen=True)
class Grid:
    """
    Periodic box [0, L)^dimension; with n_y > 0 a cross-section y in [-pi, pi)
    is appended as the leading array axis (Kolmogorov).
    """
    n_points: int = DEFAULT_POINTS
    length: float = DEFAULT_LENGTH
    dimension: int = 1
    n_y: int = 0

    def __post_init__(self):
        for name, n in (("n_points", self.n_points), ("n_y", self.n_y)):
            if name == "n_y" and n == 0:
                continue
            if n < 16 or n & (n - 1):
                raise GridMismatchError(f"{name} must be a power of two >= 16, got {n}")
        if self.length <= 0:
            raise GridMismatchError(f"Domain length must be positive, got {self.length}")
        if self.dimension not in (1, 2):
            raise GridMismatchError(f"Only 1-D and 2-D boxes are supported, got dimension {self.dimension}")
        if self.dimension == 2 and self.n_y:
            raise GridMismatchError("A 2-D box has no cross-section")

    @classmethod
    def for_model(cls, model, n_points=DEFAULT_POINTS, length=None, n_y=None):
        if model.id is ModelId.KOLMOGOROV:
            grid = cls(n_points, length or kolmogorov_default_length(), 1, n_y or DEFAULT_CROSS_POINTS)
        else:
            grid = cls(n_points, length or DEFAULT_LENGTH, model.dimension, 0)
        if model.id in (ModelId.SWIFT_HOHENBERG, ModelId.COUPLED_KS):
            periods = grid.length / (2.0 * math.pi)
            if abs(periods - round(periods)) > 1e-9 * max(1.0, periods):
                raise GridMismatchError(
                    f"L = {grid.length} is not a multiple of the critical wavelength 2*pi"
                )
        return grid

    @property
    def shape(self):
        if self.dimension == 2:
            return (self.n_points, self.n_points)
        if self.n_y:
            return (self.n_y, self.n_points)
        return (self.n_points,)

    @property
    def axes(self):
        return tuple(range(-len(self.shape), 0))

    @property
    def spectral_shape(self):
        return self.shape[:-1] + (self.n_points // 2 + 1,)

    @property
    def dx(self):
        return self.length / self.n_points

    @property
    def x(self):
        return np.arange(self.n_points) * self.dx

    @property
    def y(self):
        return -np.pi + 2.0 * np.pi * np.arange(self.n_y) / self.n_y

    def coordinates(self):
        """Physical coordinate arrays broadcast to `shape`, leading axis first."""
        if self.dimension == 2:
            return tuple(np.meshgrid(self.x, self.x, indexing="ij"))
        if self.n_y:
            return tuple(np.meshgrid(self.y, self.x, indexing="ij"))
        return (self.x,)

    def _indices(self):
        kx = np.arange(self.n_points // 2 + 1)
        if len(self.shape) == 1:
            return (kx,)
        n_lead = self.shape[0]
        ky = np.fft.fftfreq(n_lead, 1.0 / n_lead)
        return tuple(np.meshgrid(ky, kx, indexing="ij"))

    def wavenumbers(self):
        """Wavenumbers on the rfft layout, leading axis first."""
        indices = self._indices()
        scale_x = 2.0 * np.pi / self.length
        if len(indices) == 1:
            return (scale_x * indices[0],)
        scale_y = scale_x if self.dimension == 2 else 1.0
        return (scale_y * indices[0], scale_x * indices[1])

    def derivative_wavenumbers(self):
        """As wavenumbers() with Nyquist modes zeroed, for odd derivatives."""
        out = []
        sizes = self.shape
        for index, k, n in zip(self._indices(), self.wavenumbers(), sizes):
            k = k.copy()
            k[np.abs(index) == n // 2] = 0.0
            out.append(k)
        return tuple(out)

    def dealias_mask(self):
        mask = np.ones(self.spectral_shape, dtype=bool)
        for index, n in zip(self._indices(), self.shape):
            mask &= np.abs(index) < n / 3.0
        return mask

    def forward(self, fields):
        return np.fft.rfftn(fields, axes=self.axes)

    def inverse(self, hat):
        return np.fft.irfftn(hat, s=self.shape, axes=self.axes)


@dataclass
class FieldState:
    components: np.ndarray
    mu: float
    eps: float
    grid: Grid
    time: float = 0.0
    history: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        if self.components.shape[1:] != self.grid.shape:
            raise GridMismatchError(
                f"Components of shape {self.components.shape[1:]} do not fit grid {self.grid.shape}"
            )
        if self.eps < 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")

    def sup_norms(self):
        return [float(np.max(np.abs(c))) for c in self.components]


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.01
    scheme: str = "etdrk4"
    dealias: bool = True
    record_stride: int = 10
    nonlinear: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"Unknown scheme '{self.scheme}' (expected one of {', '.join(SCHEMES)})")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")

    @classmethod
    def for_model(cls, model, **overrides):
        settings = {"dt": DEFAULT_DT[model.id]}
        settings.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**settings)


class PhysicalSystem:
    """Fourier-space splitting v' = L v + N(v, t) of one model on one grid."""

    def __init__(self, model, grid, config):
        self.model = model
        self.grid = grid
        self.config = config
        self.k = grid.wavenumbers()
        self.dk = grid.derivative_wavenumbers()
        self.k2 = sum(k * k for k in self.k)
        self.mask = grid.dealias_mask() if config.dealias else np.ones(grid.spectral_shape, dtype=bool)
        self.volume = float(np.prod(grid.shape))
        linear, matrix = self._linear_symbol()
        self.linear, self.matrix = linear, matrix
        if config.scheme == "etdrk4":
            self.integrator = ETDRK4(linear, config.dt, matrix=matrix)
        else:
            self.integrator = IMEXBDF2(linear, config.dt, matrix=matrix)
        if model.id is ModelId.KOLMOGOROV:
            y = grid.coordinates()[0]
            self.sin_y, self.cos_y = np.sin(y), np.cos(y)
            dk2 = sum(k * k for k in self.dk)
            self.k2_safe = np.where(dk2 == 0.0, 1.0, dk2)
        logging.debug(f"Built {config.scheme} system for {model.describe()} on grid {grid.shape}")

    def _linear_symbol(self):
        m, k2 = self.model, self.k2
        if m.id is ModelId.SWIFT_HOHENBERG:
            return (-(1.0 - k2) ** 2)[None], False
        if m.id is ModelId.BRUSSELATOR:
            a2 = m.a * m.a
            symbol = np.empty((2, 2) + k2.shape)
            symbol[0, 0] = a2 - m.d1 * k2
            symbol[0, 1] = a2
            symbol[1, 0] = -(1.0 + a2)
            symbol[1, 1] = -a2 - m.d2 * k2
            return symbol, True
        if m.id is ModelId.COUPLED_KS:
            base = -(1.0 - k2) ** 2
            dx = 1j * self.dk[-1]
            return np.stack([base - dx, base + dx]), False
        return np.stack([-k2, -k2]), False

    def forward(self, fields):
        return self.grid.forward(fields)

    def inverse(self, hat):
        return self.grid.inverse(hat)

    def _dealiased(self, product):
        return self.mask * self.forward(product)

    def mu_at(self, t, mu0, t0, eps):
        return mu0 + eps * (t - t0)

    def explicit(self, hat, t, mu0, t0, eps):
        mu = self.mu_at(t, mu0, t0, eps)
        m = self.model
        if m.id is ModelId.KOLMOGOROV:
            return self.leray(self.kolmogorov_forcing(hat, mu, eps))
        fields = self.inverse(hat)
        out = mu * hat if m.id is not ModelId.BRUSSELATOR else np.zeros_like(hat)
        if m.id is ModelId.SWIFT_HOHENBERG:
            if self.config.nonlinear:
                out = out - self._dealiased(fields ** 3)
            return out
        u, v = fields
        if m.id is ModelId.BRUSSELATOR:
            weight = 1.0 + m.a * m.a
            out[0] = weight * mu * hat[0]
            out[1] = -weight * mu * hat[0]
            if self.config.nonlinear:
                f = self._dealiased(weight / m.a * (1.0 + mu) * u * u + 2.0 * m.a * u * v + u * u * v)
                out[0] += f
                out[1] -= f
            # constant forcing lives in the zero mode
            out[(1,) + (0,) * len(self.grid.shape)] -= eps * weight / m.a * self.volume
            return out
        if self.config.nonlinear:
            flux = 1j * self.dk[-1] * self._dealiased(u * u + u * v + v * v)
            out = out + flux[None]
        return out

    def kolmogorov_forcing(self, hat, mu, eps):
        """Unprojected right-hand side of the U' equation (pressure not yet removed)."""
        ky, kx = self.dk
        u, v = self.inverse(hat)
        ux, vx = self.inverse(1j * kx * hat)
        reynolds = R_STAR + mu
        stretch = np.stack([self.sin_y * ux + self.cos_y * v, self.sin_y * vx])
        out = -reynolds * self.forward(stretch)
        out[0] += self.forward(-eps * self.sin_y)
        if self.config.nonlinear:
            uy, vy = self.inverse(1j * ky * hat)
            advection = np.stack([u * ux + v * uy, u * vx + v * vy])
            out -= self._dealiased(advection)
        return out

    def leray(self, hat):
        ky, kx = self.dk
        projection = (kx * hat[0] + ky * hat[1]) / self.k2_safe
        out = np.stack([hat[0] - kx * projection, hat[1] - ky * projection])
        # zero mean flow: no y-averaged u at any x; the mean of v is the conserved long-wave mass
        out[0, 0, :] = 0.0
        return out

    def divergence(self, hat):
        ky, kx = self.dk
        return self.inverse(1j * (kx * hat[0] + ky * hat[1]))

    def check_constraints(self, hat, time):
        divergence = float(np.max(np.abs(self.divergence(hat))))
        mean_flow = float(np.max(np.abs(self.inverse(hat[0]).mean(axis=0))))
        if divergence > DIVERGENCE_TOL or mean_flow > MEAN_FLOW_TOL:
            raise ConstraintViolationError(
                f"Incompressibility lost at t={time:.6g}: |div U| = {divergence:.3g}, mean flow = {mean_flow:.3g}"
            )
        return divergence, mean_flow

    def advance(self, state):
        dt = self.config.dt
        hat = self.forward(state.components)
        if self.model.id is ModelId.KOLMOGOROV:
            hat = self.leray(hat)

        def nonlinear(v, t):
            return self.explicit(v, t, state.mu, state.time, state.eps)

        if self.config.scheme == "etdrk4":
            new, history = self.integrator.step(hat, state.time, nonlinear), None
        else:
            new, history = self.integrator.step(hat, state.time, nonlinear, state.history)
        time = state.time + dt
        if self.model.id is ModelId.KOLMOGOROV:
            new = self.leray(new)
        fields = self.inverse(new)
        if not np.all(np.isfinite(fields)):
            raise SolverBlowUpError(f"Non-finite field in {self.model.id.value} at t={time:.6g}", time=time)
        if self.model.id is ModelId.KOLMOGOROV:
            self.check_constraints(new, time)
        return FieldState(fields, state.mu + state.eps * dt, state.eps, state.grid, time, history)

    def rhs(self, state):
        """Fourier-space right-hand side L v + N(v, t) at the state time."""
        hat = self.forward(state.components)
        if self.model.id is ModelId.KOLMOGOROV:
            hat = self.leray(hat)
        if self.matrix:
            linear = np.einsum("ij...,j...->i...", self.linear, hat)
        else:
            linear = self.linear * hat
        return linear + self.explicit(hat, state.time, state.mu, state.time, state.eps)

    def pressure(self, state):
        hat = self.leray(self.forward(state.components))
        forcing = self.kolmogorov_forcing(hat, state.mu, state.eps)
        ky, kx = self.dk
        p_hat = -1j * (kx * forcing[0] + ky * forcing[1]) / self.k2_safe
        p_hat[0, 0] = 0.0
        return self.inverse(p_hat)


@functools.lru_cache(maxsize=16)
def physical_system(model, grid, config):
    return PhysicalSystem(model, grid, config)


def step(model, s, cfg):
    """Advances s by cfg.dt."""
    return physical_system(model, s.grid, cfg).advance(s)


def pressure(model, s, cfg=None):
    """Diagnostic Kolmogorov pressure p' recovered from the projected forcing."""
    if model.id is not ModelId.KOLMOGOROV:
        raise ValueError("Pressure is only defined for the Kolmogorov model")
    cfg = cfg or SolverConfig.for_model(model)
    return physical_system(model, s.grid, cfg).pressure(s)


@dataclass
class Trajectory:
    model: object
    records: list

    @property
    def times(self):
        return np.array([r.time for r in self.records])

    @property
    def final(self):
        return self.records[-1]

    def frame(self):
        names = COMPONENT_NAMES[self.model.id]
        rows = []
        for record in self.records:
            row = {"t": record.time, "mu": record.mu}
            for name, value in zip(names, record.sup_norms()):
                row[f"sup_norm_{name}"] = value
            rows.append(row)
        return pd.DataFrame(rows, columns=["t", "mu"] + [f"sup_norm_{n}" for n in names])


def simulate(model, initial, t_end, cfg):
    """Fixed-step run from `initial` to t_end, recording every cfg.record_stride steps."""
    if t_end <= initial.time:
        raise ValueError(f"t_end={t_end} must exceed the initial time {initial.time}")
    n_steps = int(round((t_end - initial.time) / cfg.dt))
    if abs(n_steps * cfg.dt - (t_end - initial.time)) > 1e-9 * max(1.0, t_end):
        logging.warning(f"t_end={t_end} is not a multiple of dt={cfg.dt}; stopping at {initial.time + n_steps * cfg.dt}")
    system = physical_system(model, initial.grid, cfg)
    if model.id is ModelId.KOLMOGOROV:
        system.check_constraints(system.forward(initial.components), initial.time)
    logging.info(f"Simulating {model.describe()} for {n_steps} steps of dt={cfg.dt} ({cfg.scheme})")
    state = initial
    records = [replace(initial, history=None)]
    for n in range(1, n_steps + 1):
        state = system.advance(state)
        # keep the slow variable exact rather than accumulated
        state.time = initial.time + n * cfg.dt
        state.mu = initial.mu + initial.eps * n * cfg.dt
        if n % cfg.record_stride == 0 or n == n_steps:
            records.append(replace(state, history=None))
    return Trajectory(model, records)


def _kolmogorov_fields(grid, u_hat_modes, v_hat_modes, xi):
    """Real fields Re sum_n c_n exp(i (xi x + n y)) on the grid."""
    y, x = grid.coordinates()
    u = np.zeros(grid.shape)
    v = np.zeros(grid.shape)
    limit = grid.n_y // 2
    for n, (cu, cv) in enumerate(zip(u_hat_modes, v_hat_modes)):
        wave = n - len(u_hat_modes) // 2
        if abs(wave) >= limit:
            continue
        phase = np.exp(1j * (xi * x + wave * y))
        u += np.real(cu * phase)
        v += np.real(cv * phase)
    return np.stack([u, v])


def kolmogorov_ansatz(grid, amplitude_field):
    """Leading-order U' = A(x) (-sqrt(2) cos y, 1), projected onto divergence-free fields."""
    y = grid.coordinates()[0]
    fields = np.stack([-math.sqrt(2.0) * np.cos(y) * amplitude_field, np.broadcast_to(amplitude_field, grid.shape)])
    system = physical_system(ModelSpec(ModelId.KOLMOGOROV), grid, SolverConfig(dt=DEFAULT_DT[ModelId.KOLMOGOROV]))
    return system.inverse(system.leray(system.forward(fields)))


def initial_state(model, grid, mu=0.0, eps=0.0, kind="random", amplitude=1e-3, rng=None, band=0.25):
    """
    Initial data classes for dynamic and static runs.

    kind is one of "zero", "mode" (the critical mode at the given amplitude),
    "homogeneous" (constant first component) or "random" (random-phase
    band-limited perturbation around the critical wavenumber, sup-norm =
    amplitude).
    """
    n = model.n_components
    fields = np.zeros((n,) + grid.shape)
    coords = grid.coordinates()
    x = coords[-1]
    if kind == "zero":
        pass
    elif kind == "homogeneous":
        fields[0] = amplitude
    elif kind == "mode":
        if model.id is ModelId.KOLMOGOROV:
            fields = kolmogorov_ansatz(grid, amplitude * np.cos(2.0 * np.pi * x / grid.length))
        elif model.id is ModelId.BRUSSELATOR:
            fields[0] = amplitude
        else:
            fields[0] = amplitude * np.cos(x)
    elif kind == "random":
        rng = rng if rng is not None else np.random.default_rng(0)
        center = 0.0 if model.id in (ModelId.BRUSSELATOR, ModelId.KOLMOGOROV) else 1.0
        k = 2.0 * np.pi / grid.length * np.arange(grid.n_points // 2 + 1)
        chosen = [kk for kk in k if abs(kk - center) <= band]
        signal = np.zeros(x.shape)
        for kk in chosen:
            signal += rng.uniform(0.5, 1.0) * np.cos(kk * x + rng.uniform(0.0, 2.0 * np.pi))
        peak = float(np.max(np.abs(signal)))
        signal = amplitude * signal / peak if peak > 0 else signal
        if model.id is ModelId.KOLMOGOROV:
            fields = kolmogorov_ansatz(grid, signal)
        else:
            fields[0] = signal
    else:
        raise ValueError(f"Unknown initial condition '{kind}'")
    return FieldState(fields, mu, eps, grid, 0.0)


@dataclass(frozen=True)
class GrowthMeasurement:
    rate: float
    stderr: float
    reduced_precision: bool = False

    def __float__(self):
        return self.rate


def _probe_grid(model, xi):
    length = 2.0 * math.pi / abs(xi) if xi != 0 else 2.0 * math.pi
    if model.id is ModelId.KOLMOGOROV:
        return Grid(16, length, 1, DEFAULT_CROSS_POINTS)
    return Grid(16, length, model.dimension, 0)


def linear_growth_probe(model, xi, mu, duration=PROBE_DURATION, amplitude=PROBE_AMPLITUDE, dt=None):
    """
    Measures Re lambda(xi, mu) by evolving a single Fourier mode with the
    nonlinearity off and mu frozen, then fitting the log-amplitude slope.
    """
    if model.id is ModelId.KOLMOGOROV and xi == 0:
        raise RangeError("The Kolmogorov probe needs xi != 0 (the xi = 0 mode is pinned by conservation)")
    grid = _probe_grid(model, xi)
    cfg = SolverConfig(dt=dt or DEFAULT_DT[model.id], nonlinear=False, record_stride=1)
    system = physical_system(model, grid, cfg)
    index = 0 if xi == 0 else 1
    coords = grid.coordinates()
    x = coords[-1]
    wave = np.exp(1j * abs(xi) * x)

    left = None
    if model.id is ModelId.KOLMOGOROV:
        _, psi, _ = kolmogorov_leading_mode(abs(xi), mu)
        psi = psi / np.max(np.abs(psi))
        modes = np.arange(len(psi)) - len(psi) // 2
        fields = amplitude * _kolmogorov_fields(grid, 1j * modes * psi, -1j * abs(xi) * psi, abs(xi))
    elif model.id is ModelId.BRUSSELATOR:
        values, vectors = np.linalg.eig(symbol_matrix(model, abs(xi), mu))
        lead = min(range(len(values)), key=lambda j: (-values[j].real, values[j].imag))
        left = np.linalg.inv(vectors)[lead]
        vector = vectors[:, lead].reshape((2,) + (1,) * wave.ndim)
        fields = amplitude * np.real(vector * wave[None])
    else:
        fields = np.zeros((model.n_components,) + grid.shape)
        fields[0] = amplitude * np.real(wave)

    def measure(components):
        hat = system.forward(components)
        coefficient = hat[(slice(None),) + (0,) * (len(grid.shape) - 1) + (index,)]
        if model.id is ModelId.KOLMOGOROV:
            return float(np.linalg.norm(hat[..., index]))
        if left is not None:
            return float(abs(left @ coefficient))
        return float(np.linalg.norm(coefficient))

    state = FieldState(fields, mu, 0.0, grid, 0.0)
    n_steps = int(round(duration / cfg.dt))
    times, amplitudes = [0.0], [measure(state.components)]
    for n in range(1, n_steps + 1):
        state = system.advance(state)
        times.append(n * cfg.dt)
        amplitudes.append(measure(state.components))
    times, amplitudes = np.array(times), np.array(amplitudes)
    # amplitude in physical units, measured against the probe floor
    keep = amplitudes / amplitudes[0] * amplitude >= PROBE_FLOOR
    reduced = not bool(np.all(keep))
    if reduced:
        logging.warning(f"Probe mode for {model.id.value} at xi={xi} decayed below {PROBE_FLOOR}; reduced precision")
    if np.count_nonzero(keep) < 2:
        keep[:2] = True
    fit = stats.linregress(times[keep], np.log(amplitudes[keep]))
    return GrowthMeasurement(float(fit.slope), float(fit.stderr), reduced)
