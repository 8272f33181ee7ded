"""
Blow-up coordinates for the slow parameter plane (mu, eps).

The degenerate point (0, 0) is replaced by a half cylinder:

    mu = r**2 * bar_mu,   eps = r**(2 + beta) * bar_eps,   bar_mu**2 + bar_eps**2 = 1.

Three charts cover it: K1 (bar_mu = -1), K2 (bar_eps = 1) and K3 (bar_mu = 1).
Every chart carries a radius r_i and one slow coordinate (eps1, mu2 or eps3),
and the desingularized slow flow in each chart has an elementary closed form.
"""
import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ChartDomainError, DegeneratePointError

NORMALIZATION_TOL = 1e-12
# K1 stepping stops this close (relative) to the eps1 blow-up time.
K1_GUARD_FRACTION = 0.01


class ChartId(enum.Enum):
    K1 = "K1"
    K2 = "K2"
    K3 = "K3"

    @classmethod
    def parse(cls, text):
        try:
            return cls(str(text).strip().upper())
        except ValueError:
            raise ChartDomainError(f"Unknown chart '{text}' (expected K1, K2 or K3)")


def _check_beta(beta):
    if int(beta) != beta or beta < 1:
        raise ChartDomainError(f"beta must be a positive integer, got {beta}")


@dataclass(frozen=True)
class BlowUpPoint:
    r: float
    bar_mu: float
    bar_eps: float
    beta: int = 2

    def __post_init__(self):
        _check_beta(self.beta)
        if self.r < 0:
            raise ChartDomainError(f"Blow-up radius must be nonnegative, got r={self.r}")
        if self.bar_eps < 0:
            raise ChartDomainError(f"bar_eps must be nonnegative, got {self.bar_eps}")
        if abs(self.bar_mu ** 2 + self.bar_eps ** 2 - 1.0) > NORMALIZATION_TOL:
            raise ChartDomainError(
                f"(bar_mu, bar_eps) = ({self.bar_mu}, {self.bar_eps}) is not on the unit circle"
            )


@dataclass(frozen=True)
class ChartPoint:
    """
    A point in one of the charts.

    `slow` is eps1 in K1, mu2 in K2 and eps3 in K3.
    """
    chart: ChartId
    r: float
    slow: float
    beta: int = 2

    def __post_init__(self):
        _check_beta(self.beta)
        if self.r < 0:
            raise ChartDomainError(f"Chart radius must be nonnegative, got r={self.r}")
        if self.chart in (ChartId.K1, ChartId.K3) and self.slow < 0:
            raise ChartDomainError(f"{self.chart.value} requires a nonnegative eps coordinate, got {self.slow}")

    @property
    def weight(self):
        return 2 + self.beta

    def params(self):
        """Returns (mu, eps) for this chart point."""
        r2 = self.r ** 2
        rw = self.r ** self.weight
        if self.chart is ChartId.K1:
            return -r2, rw * self.slow
        if self.chart is ChartId.K2:
            return r2 * self.slow, rw
        return r2, rw * self.slow


def blowup_to_params(p):
    return p.r ** 2 * p.bar_mu, p.r ** (2 + p.beta) * p.bar_eps


def params_to_blowup(mu, eps, beta=2):
    """
    Inverts the blow-up map under the unit-circle normalization.

    The radius is the root of the strictly decreasing function
    r -> (mu/r**2)**2 + (eps/r**(2+beta))**2 - 1.
    """
    _check_beta(beta)
    if eps < 0:
        raise ChartDomainError(f"eps must be nonnegative, got {eps}")
    if mu == 0 and eps == 0:
        raise DegeneratePointError("(mu, eps) = (0, 0) has no unique blow-up preimage")

    weight = 2 + beta
    if eps == 0:
        r = math.sqrt(abs(mu))
    elif mu == 0:
        r = eps ** (1.0 / weight)
    else:
        scales = [abs(mu) ** 0.5, eps ** (1.0 / weight)]

        def f(radius):
            return (mu / radius ** 2) ** 2 + (eps / radius ** weight) ** 2 - 1.0

        r = optimize.bisect(f, min(scales) / 2.0, max(scales) * 2.0, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                            maxiter=400)

    bar_mu = mu / r ** 2
    bar_eps = eps / r ** weight
    norm = math.hypot(bar_mu, bar_eps)
    return BlowUpPoint(r, bar_mu / norm, bar_eps / norm, beta)


def chart_from_global(p, chart):
    """
    Expresses a blow-up point in the requested chart.

    Returns:
        tuple: (ChartPoint, psi_scale) where psi_i = psi_scale * psi.
    """
    chart = chart if isinstance(chart, ChartId) else ChartId.parse(chart)
    weight = 2 + p.beta
    if chart is ChartId.K1:
        if p.bar_mu >= 0:
            raise ChartDomainError(f"K1 needs bar_mu < 0, got {p.bar_mu}")
        root = math.sqrt(-p.bar_mu)
        return ChartPoint(chart, p.r * root, p.bar_eps / root ** weight, p.beta), 1.0 / root
    if chart is ChartId.K2:
        if p.bar_eps <= 0:
            raise ChartDomainError(f"K2 needs bar_eps > 0, got {p.bar_eps}")
        s = p.bar_eps ** (1.0 / weight)
        return ChartPoint(chart, p.r * s, p.bar_mu / s ** 2, p.beta), 1.0 / s
    if p.bar_mu <= 0:
        raise ChartDomainError(f"K3 needs bar_mu > 0, got {p.bar_mu}")
    root = math.sqrt(p.bar_mu)
    return ChartPoint(chart, p.r * root, p.bar_eps / root ** weight, p.beta), 1.0 / root


def _expect(q, chart):
    if q.chart is not chart:
        raise ChartDomainError(f"Expected a {chart.value} point, got {q.chart.value}")


def kappa12(q, psi_scale=1.0):
    """K2 -> K1, defined for mu2 < 0."""
    _expect(q, ChartId.K2)
    if q.slow >= 0:
        raise ChartDomainError(f"kappa12 is undefined for mu2 >= 0 (mu2={q.slow})")
    root = math.sqrt(-q.slow)
    point = ChartPoint(ChartId.K1, q.r * root, root ** -q.weight, q.beta)
    return point, psi_scale / root


def kappa21(q, psi_scale=1.0):
    """K1 -> K2, defined for eps1 > 0."""
    _expect(q, ChartId.K1)
    if q.slow <= 0:
        raise ChartDomainError(f"kappa21 is undefined for eps1 <= 0 (eps1={q.slow})")
    s = q.slow ** (1.0 / q.weight)
    point = ChartPoint(ChartId.K2, q.r * s, -1.0 / s ** 2, q.beta)
    return point, psi_scale / s


def kappa23(q, psi_scale=1.0):
    """K3 -> K2, defined for eps3 > 0."""
    _expect(q, ChartId.K3)
    if q.slow <= 0:
        raise ChartDomainError(f"kappa23 is undefined for eps3 <= 0 (eps3={q.slow})")
    s = q.slow ** (1.0 / q.weight)
    point = ChartPoint(ChartId.K2, q.r * s, 1.0 / s ** 2, q.beta)
    return point, psi_scale / s


def kappa32(q, psi_scale=1.0):
    """K2 -> K3, defined for mu2 > 0."""
    _expect(q, ChartId.K2)
    if q.slow <= 0:
        raise ChartDomainError(f"kappa32 is undefined for mu2 <= 0 (mu2={q.slow})")
    root = math.sqrt(q.slow)
    point = ChartPoint(ChartId.K3, q.r * root, root ** -q.weight, q.beta)
    return point, psi_scale / root


def switch_chart(q, k1_to_k2=1.0, k2_to_k3=1.0):
    """
    Applies the chart-switch policy: K1 -> K2 once eps1 >= k1_to_k2 and
    K2 -> K3 once mu2 >= k2_to_k3. Returns (point, psi_scale); the scale is 1
    when no switch happens.
    """
    if q.chart is ChartId.K1 and q.slow >= k1_to_k2:
        point, scale = kappa21(q)
        logging.info(f"Switching K1 -> K2 at eps1={q.slow:.6g} (mu2={point.slow:.6g})")
        return point, scale
    if q.chart is ChartId.K2 and q.slow >= k2_to_k3:
        point, scale = kappa32(q)
        logging.info(f"Switching K2 -> K3 at mu2={q.slow:.6g} (eps3={point.slow:.6g})")
        return point, scale
    return q, 1.0


@dataclass(frozen=True)
class SlowTrajectory:
    """Closed-form desingularized slow flow starting from `initial`."""
    initial: ChartPoint

    @property
    def chart(self):
        return self.initial.chart

    @property
    def beta(self):
        return self.initial.beta

    @property
    def blow_up_time(self):
        """eps1 blow-up time in K1; infinite elsewhere or when eps1(0) = 0."""
        if self.chart is ChartId.K1 and self.initial.slow > 0:
            return 2.0 / (self.initial.weight * self.initial.slow)
        return math.inf

    def _check_time(self, t):
        if t < 0:
            raise ChartDomainError(f"Slow time must be nonnegative, got {t}")
        if t >= self.blow_up_time:
            raise ChartDomainError(
                f"t1={t} is beyond the K1 blow-up time {self.blow_up_time:.6g}"
            )

    def _stretch(self, t):
        # (2 -/+ w*s0*t)/2, the common factor of the K1 and K3 closed forms
        w, s0 = self.initial.weight, self.initial.slow
        sign = -1.0 if self.chart is ChartId.K1 else 1.0
        return 1.0 + sign * 0.5 * w * s0 * t

    def at(self, t):
        self._check_time(t)
        p = self.initial
        if self.chart is ChartId.K2:
            return ChartPoint(ChartId.K2, p.r, p.slow + t, p.beta)
        stretch = self._stretch(t)
        return ChartPoint(self.chart, p.r * stretch ** (1.0 / p.weight), p.slow / stretch, p.beta)

    def mu_bar(self, t):
        if self.chart is ChartId.K1:
            return -1.0
        if self.chart is ChartId.K3:
            return 1.0
        return self.initial.slow + t

    def rho(self, t):
        """r^{-1} dr/dt along the flow."""
        if self.chart is ChartId.K2:
            return 0.0
        eps_i = self.at(t).slow
        return -0.5 * eps_i if self.chart is ChartId.K1 else 0.5 * eps_i

    def drift(self, t, mu_weight=1.0):
        return mu_weight * self.mu_bar(t) - self.rho(t)

    def mu_bar_integral(self, t0, t1):
        if self.chart is ChartId.K1:
            return -(t1 - t0)
        if self.chart is ChartId.K3:
            return t1 - t0
        return self.initial.slow * (t1 - t0) + 0.5 * (t1 * t1 - t0 * t0)

    def log_r_ratio(self, t0, t1):
        """ln(r(t1)/r(t0))."""
        if self.chart is ChartId.K2:
            return 0.0
        self._check_time(t1)
        w, s0 = self.initial.weight, self.initial.slow
        sign = -1.0 if self.chart is ChartId.K1 else 1.0
        return math.log1p(sign * 0.5 * w * s0 * (t1 - t0) / self._stretch(t0)) / w

    def drift_integral(self, t0, t1, mu_weight=1.0):
        return mu_weight * self.mu_bar_integral(t0, t1) - self.log_r_ratio(t0, t1)

    def eps(self):
        return self.initial.params()[1]

    def global_params(self, t):
        return self.at(t).params()

    def physical_time(self, t):
        """Physical time elapsed between chart times 0 and t."""
        p = self.initial
        eps = self.eps()
        if self.chart is ChartId.K2 or eps == 0:
            if p.r == 0:
                raise ChartDomainError("Physical time is undefined on the blow-up manifold r = 0")
            return t / p.r ** p.beta
        r_t = self.at(t).r
        if self.chart is ChartId.K1:
            return (p.r ** 2 - r_t ** 2) / eps
        return (r_t ** 2 - p.r ** 2) / eps

    def time_at_physical(self, elapsed):
        """Inverse of physical_time."""
        p = self.initial
        eps = self.eps()
        if self.chart is ChartId.K2 or eps == 0:
            return elapsed * p.r ** p.beta
        sign = -1.0 if self.chart is ChartId.K1 else 1.0
        r_sq = p.r ** 2 + sign * eps * elapsed
        if r_sq <= 0:
            raise ChartDomainError(f"Physical time {elapsed} leaves the K1 validity window")
        ratio = (r_sq / p.r ** 2) ** (p.weight / 2.0)
        return sign * 2.0 * (ratio - 1.0) / (p.weight * p.slow)


@dataclass(frozen=True)
class FrozenSlowFlow:
    """
    Static restriction: constant bar_mu, constant r, no drift of r.

    Used for static modulation equations and frozen-parameter probes.
    """
    mu_bar_value: float = 1.0
    r: float = 1.0
    beta: int = 2

    chart = None
    blow_up_time = math.inf

    def mu_bar(self, t):
        return self.mu_bar_value

    def rho(self, t):
        return 0.0

    def drift(self, t, mu_weight=1.0):
        return mu_weight * self.mu_bar_value

    def mu_bar_integral(self, t0, t1):
        return self.mu_bar_value * (t1 - t0)

    def log_r_ratio(self, t0, t1):
        return 0.0

    def drift_integral(self, t0, t1, mu_weight=1.0):
        return mu_weight * self.mu_bar_integral(t0, t1)

    def physical_time(self, t):
        return t / self.r ** self.beta

    def time_at_physical(self, elapsed):
        return elapsed * self.r ** self.beta


def slow_flow_eval(traj, t):
    return traj.at(t)


def chart_rhs(point):
    """Right-hand side (dr/dt, dslow/dt) of the desingularized chart ODE."""
    w = point.weight
    if point.chart is ChartId.K1:
        return -0.5 * point.r * point.slow, 0.5 * w * point.slow ** 2
    if point.chart is ChartId.K2:
        return 0.0, 1.0
    return 0.5 * point.r * point.slow, -0.5 * w * point.slow ** 2


def integrate_chart_ode(initial, t_end, n_steps=1000):
    """Classical RK4 integration of the chart ODE, an oracle for SlowTrajectory."""
    h = t_end / n_steps
    y = np.array([initial.r, initial.slow], dtype=float)

    def rhs(state):
        return np.array(chart_rhs(ChartPoint(initial.chart, state[0], state[1], initial.beta)))

    for _ in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return ChartPoint(initial.chart, float(y[0]), float(y[1]), initial.beta)
