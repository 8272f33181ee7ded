"""
Linear stability data for the four models: dispersion relations, unstable
bands, critical data and bifurcation classification.
"""
import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import optimize

from .errors import NoSignChangeError, RangeError
from .geometry import ChartId
from .models import ModelId, R_STAR

M4_SERIES_LIMIT = 0.5
M4_ORACLE_MODES = 64
BAND_XTOL = 1e-12


class BifurcationKind(enum.Enum):
    TURING = "Turing"
    HOPF = "Hopf"
    TURING_HOPF = "TuringHopf"
    LONG_WAVE_CONSERVED = "LongWaveConserved"


@dataclass(frozen=True)
class DispersionResult:
    eigenvalues: tuple

    @property
    def leading(self):
        return self.eigenvalues[0]


@dataclass(frozen=True)
class BifurcationData:
    xi_c: float
    omega_c: float
    mu_c: float
    kind: BifurcationKind


def _sorted(values):
    # descending real part, ties broken by ascending imaginary part
    return tuple(sorted((complex(v) for v in values), key=lambda z: (-z.real, z.imag)))


def brusselator_coefficients(a, d1, d2):
    """Closed-form complex GL coefficients (c1, c2, c3) of the Brusselator."""
    c1 = complex(d1 + d2, -a * (d1 - d2)) / 2.0
    c2 = (1.0 + a * a) / 2.0
    c3 = 0.5 * complex((2.0 + a * a) / (a * a), (4.0 - 7.0 * a * a + 4.0 * a ** 4) / (3.0 * a ** 3))
    return c1, c2, c3


def kolmogorov_modes(n_modes=M4_ORACLE_MODES):
    return np.arange(-(n_modes // 2), n_modes // 2)


def kolmogorov_matrix(xi, r_prime, n_modes=M4_ORACLE_MODES):
    """
    Linearization of Kolmogorov flow about the laminar profile, in
    streamfunction Fourier coefficients psi_n (y-modes n) at x-wavenumber xi.
    """
    reynolds = R_STAR + r_prime
    modes = kolmogorov_modes(n_modes)
    size = len(modes)
    matrix = np.zeros((size, size))
    half = 0.5 * reynolds * xi
    xi2 = xi * xi
    for i, n in enumerate(modes):
        matrix[i, i] = -(xi2 + n * n)
        if xi == 0.0:
            continue
        weight = xi2 + n * n
        # the n = 0 row has weight xi**2 and both neighbour factors reduce to it
        if i > 0:
            matrix[i, i - 1] = -half * (1.0 if n == 0 else (xi2 + (n - 1) ** 2 - 1.0) / weight)
        if i < size - 1:
            matrix[i, i + 1] = half * (1.0 if n == 0 else (xi2 + (n + 1) ** 2 - 1.0) / weight)
    return matrix


def kolmogorov_leading_mode(xi, r_prime, n_modes=M4_ORACLE_MODES):
    """Returns (lambda, psi_n, modes) for the leading streamfunction eigenmode."""
    values, vectors = np.linalg.eig(kolmogorov_matrix(xi, r_prime, n_modes))
    lead = int(np.argmax(values.real))
    vector = vectors[:, lead]
    # normalize so that the mean mode psi_0 carries unit amplitude
    center = n_modes // 2
    pivot = vector[center] if abs(vector[center]) > 1e-14 else vector[np.argmax(np.abs(vector))]
    return values[lead], vector / pivot, kolmogorov_modes(n_modes)


def kolmogorov_series(xi, r_prime):
    reynolds = R_STAR + r_prime
    r2 = reynolds * reynolds
    return -(1.0 - r2 / 2.0) * xi ** 2 - r2 * (1.0 + r2 / 4.0) * xi ** 4


def symbol_matrix(m, xi, mu):
    """Fourier symbol of the linearization (M + L) at wavenumber xi."""
    if m.id is ModelId.SWIFT_HOHENBERG:
        return np.array([[-(1.0 - xi * xi) ** 2 + mu]])
    if m.id is ModelId.BRUSSELATOR:
        a2 = m.a * m.a
        return np.array([
            [a2 + (1.0 + a2) * mu - m.d1 * xi * xi, a2],
            [-(1.0 + a2) * (1.0 + mu), -a2 - m.d2 * xi * xi],
        ])
    if m.id is ModelId.COUPLED_KS:
        base = -(1.0 - xi * xi) ** 2 + mu
        return np.diag([base - 1j * xi, base + 1j * xi])
    return kolmogorov_matrix(xi, mu)


def dispersion(m, xi, mu, method="series"):
    """
    Eigenvalues lambda_j(xi, mu), ordered by descending real part.

    For the Kolmogorov flow `mu` is the Reynolds offset R' and `method` selects
    the quartic long-wave series ("series") or the truncated y-Fourier
    eigenproblem ("numeric").
    """
    if m.id is ModelId.SWIFT_HOHENBERG:
        return DispersionResult((complex(-(1.0 - xi * xi) ** 2 + mu),))
    if m.id is ModelId.BRUSSELATOR:
        a2 = m.a * m.a
        sigma = (m.d1 + m.d2) * xi * xi - (1.0 + a2) * mu
        kappa = (a2 + (1.0 + a2) * mu - m.d1 * xi * xi) * (-a2 - m.d2 * xi * xi) + a2 * (1.0 + a2) * (1.0 + mu)
        root = np.sqrt(complex(sigma * sigma - 4.0 * kappa))
        return DispersionResult(_sorted([(-sigma + root) / 2.0, (-sigma - root) / 2.0]))
    if m.id is ModelId.COUPLED_KS:
        base = -(1.0 - xi * xi) ** 2 + mu
        return DispersionResult(_sorted([complex(base, -xi), complex(base, xi)]))
    if method == "numeric":
        return DispersionResult(_sorted(np.linalg.eigvals(kolmogorov_matrix(xi, mu))))
    if abs(xi) > M4_SERIES_LIMIT:
        raise RangeError(f"Long-wave series is only valid for |xi| <= {M4_SERIES_LIMIT}, got {xi}")
    return DispersionResult((complex(kolmogorov_series(xi, mu)),))


def classify(m):
    if m.id is ModelId.SWIFT_HOHENBERG:
        return BifurcationData(1.0, 0.0, 0.0, BifurcationKind.TURING)
    if m.id is ModelId.BRUSSELATOR:
        return BifurcationData(0.0, m.a, 0.0, BifurcationKind.HOPF)
    if m.id is ModelId.COUPLED_KS:
        return BifurcationData(1.0, -1.0, 0.0, BifurcationKind.TURING_HOPF)
    return BifurcationData(0.0, 0.0, 0.0, BifurcationKind.LONG_WAVE_CONSERVED)


def kind_from_critical(xi_c, omega_c, conserved=False):
    """The classification predicate on critical data alone."""
    if xi_c == 0 and omega_c == 0:
        if conserved:
            return BifurcationKind.LONG_WAVE_CONSERVED
        raise ValueError("xi_c = omega_c = 0 without a conservation law is not classified")
    if omega_c == 0:
        return BifurcationKind.TURING
    if xi_c == 0:
        return BifurcationKind.HOPF
    return BifurcationKind.TURING_HOPF


def group_velocity(m, h=1e-5):
    """-d Im(lambda_1)/d xi at the critical wavenumber."""
    xi_c = classify(m).xi_c
    ahead = dispersion(m, xi_c + h, 0.0).leading.imag
    behind = dispersion(m, xi_c - h, 0.0).leading.imag
    return -(ahead - behind) / (2.0 * h)


def leading_growth(m, xi, mu):
    return dispersion(m, xi, mu).leading.real


def _edge(f, inside, step, limit):
    """Walks from `inside` in steps of `step` until f changes sign, then bisects."""
    x = inside
    while abs(x - inside) < limit:
        nxt = x + step
        if f(nxt) < 0:
            return optimize.bisect(f, min(x, nxt), max(x, nxt), xtol=BAND_XTOL, maxiter=500)
        x = nxt
    raise NoSignChangeError(f"No sign change of Re lambda_1 within {limit} of xi={inside}")


def unstable_band(m, delta):
    """
    Endpoints of the unstable band at mu = delta**2.

    Models with xi_c = 0 return the symmetric pair (-xi_plus, xi_plus).
    """
    if not 0 < delta <= 0.5:
        raise RangeError(f"delta must lie in (0, 0.5], got {delta}")
    mu = delta * delta
    xi_c = classify(m).xi_c
    step = delta / 50.0

    def f(xi):
        return leading_growth(m, xi, mu)

    if xi_c > 0:
        if f(xi_c) <= 0:
            raise NoSignChangeError(f"{m.id.value} is not unstable at xi_c for mu={mu}")
        return _edge(f, xi_c, -step, xi_c), _edge(f, xi_c, step, 10.0)

    probe = step if m.id is ModelId.KOLMOGOROV else 0.0
    if f(probe) <= 0:
        raise NoSignChangeError(f"{m.id.value} is not unstable near xi=0 for mu={mu}")
    plus = _edge(f, probe, step, M4_SERIES_LIMIT if m.id is ModelId.KOLMOGOROV else 10.0)
    return -plus, plus


def printed_band_estimate(m, delta):
    """Leading-order band edge as printed in the literature, kept for reporting only."""
    if m.id is ModelId.SWIFT_HOHENBERG or m.id is ModelId.COUPLED_KS:
        return 1.0 - 0.5 * delta, 1.0 + 0.5 * delta
    if m.id is ModelId.BRUSSELATOR:
        edge = (1.0 + m.a ** 2) / (m.d1 + m.d2) * delta
        return -edge, edge
    edge = math.sqrt(2.0 / 3.0) * delta
    return -edge, edge


def chart_linear_spectrum(m, chart, k, slow):
    """
    Growth rate of the chart modulation equation linearized about A = 0 at
    wavenumber k, given the chart's slow coordinate (eps1, mu2 or eps3).
    """
    chart = chart if isinstance(chart, ChartId) else ChartId.parse(chart)
    if m.id is ModelId.KOLMOGOROV:
        rho = {ChartId.K1: -0.5 * slow, ChartId.K2: 0.0, ChartId.K3: 0.5 * slow}[chart]
        r_bar = {ChartId.K1: -1.0, ChartId.K2: slow, ChartId.K3: 1.0}[chart]
        return -rho - 3.0 * k ** 4 + math.sqrt(2.0) * r_bar * k * k
    if m.id is ModelId.BRUSSELATOR:
        c1, c2, _ = brusselator_coefficients(m.a, m.d1, m.d2)
        diffusion, weight = c1.real, c2
    else:
        diffusion, weight = 4.0, 1.0
    drift = {
        ChartId.K1: -weight + 0.5 * slow,
        ChartId.K2: weight * slow,
        ChartId.K3: weight - 0.5 * slow,
    }[chart]
    return drift - diffusion * k * k


def dispersion_frame(m, mu, xi_values, method="series"):
    """Dispersion curves as a DataFrame with two leading eigenvalue columns."""
    rows = []
    for xi in xi_values:
        values = dispersion(m, float(xi), mu, method).eigenvalues
        second = values[1] if len(values) > 1 else complex(np.nan, np.nan)
        rows.append({
            "xi": float(xi),
            "re_lambda1": values[0].real,
            "im_lambda1": values[0].imag,
            "re_lambda2": second.real,
            "im_lambda2": second.imag,
        })
    logging.debug(f"Evaluated {len(rows)} dispersion samples for {m.id.value} at mu={mu}")
    return pd.DataFrame(rows, columns=["xi", "re_lambda1", "im_lambda1", "re_lambda2", "im_lambda2"])
