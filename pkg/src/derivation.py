"""
Fast-slow multiple-scales derivation of the modulation equations.

The blown-up solution is expanded as U = r * sum_nu r**nu psi^(nu) with
d/dx -> d/dx + r d/dxbar and d/dt -> d/dt + r**beta (d/dtbar + rho), where
rho = r'/r is carried as an opaque marker. Each order gives

    (d/dt - M - L^(0)) psi^(nu) = B^(nu),

solved harmonic by harmonic. The solvability condition at nu = beta is the
amplitude equation. Kolmogorov flow has no fast x-dependence and is handled
by its own recurrence in the periodic y-direction.
"""
import logging
from dataclasses import dataclass, field

import sympy as sp

from .errors import DerivationError
from .harmonics import HarmonicSeries, conjugate_expr, trig_series
from .models import ModelId
from .opexpand import (
    CoefficientTag, apply_level_harmonic, brusselator_operators, coupled_ks_operators, expand_operator,
    kolmogorov_operator, swift_hohenberg_operator,
)
from .spectra import brusselator_coefficients, group_velocity

XB, TB = sp.symbols("xb tb", real=True)
Y = sp.Symbol("y", real=True)
MUBAR = sp.Symbol("mubar")
RHO = sp.Symbol("rho")
HARMONIC_LIMIT = 3
Y_HARMONIC_LIMIT = 32
GROUP_VELOCITY_TOL = 1e-6
MAX_SLOW_DERIVATIVE = 4


def amplitude(name):
    return sp.Function(name)(XB, TB)


def exact(value):
    """Exact rational for a float model parameter (0.1 -> 1/10)."""
    return sp.Rational(repr(float(value)))


@dataclass
class AnsatzSeries:
    """orders[nu][j] maps a harmonic (k_x, k_t) to the coefficient of psi_j^(nu)."""
    orders: list

    @property
    def depth(self):
        return len(self.orders)

    def harmonic(self, nu, j, k):
        return self.orders[nu][j].get(tuple(k), sp.Integer(0))


@dataclass
class MatchingRHS:
    order: int
    components: list

    def harmonics(self):
        keys = set()
        for component in self.components:
            keys.update(component)
        return sorted(keys)

    def vector(self, k):
        return sp.Matrix([component.get(k, sp.Integer(0)) for component in self.components])

    def is_zero(self):
        return not any(self.components)


@dataclass(frozen=True)
class CriticalMode:
    harmonic: tuple
    amplitude: sp.Expr
    phi: sp.Matrix
    primary: bool


@dataclass
class ModulationCoefficients:
    """
    Coefficients of the amplitude equation, signed as they appear on its
    right-hand side. GL-type models read

        dA/dtbar = -advection dA/dxbar + linear_diffusion A'' + drift_linear A
                   + cubic_self |A|^2 A + cubic_cross |B|^2 A

    and Kolmogorov flow reads

        dA/dtbar = drift_linear A + ch_fourth A'''' + ch_second Rbar A'' + ch_cubic (A^3)''.
    """
    model: ModelId
    linear_diffusion: complex = 0j
    mu_weight: complex = 0j
    drift_linear: sp.Expr = sp.Integer(0)
    advection: float = 0.0
    cubic_self: complex = 0j
    cubic_cross: complex = 0j
    ch_fourth: float = 0.0
    ch_second: float = 0.0
    ch_cubic: float = 0.0
    exact_values: dict = field(default_factory=dict)
    printed: dict = field(default_factory=dict)
    intermediates: dict = field(default_factory=dict)

    @property
    def c1(self):
        return self.linear_diffusion

    @property
    def c2(self):
        return self.mu_weight

    @property
    def c3(self):
        return -self.cubic_self

    @property
    def gamma1(self):
        return -self.cubic_self

    @property
    def gamma2(self):
        return -self.cubic_cross

    @property
    def printed_gamma1(self):
        return self.printed.get("gamma1")

    @property
    def printed_gamma2(self):
        return self.printed.get("gamma2")


@dataclass
class DerivationResult:
    model: object
    coefficients: ModulationCoefficients
    equations: dict
    matching: list = field(default_factory=list)
    series: AnsatzSeries = None
    profiles: dict = field(default_factory=dict)

    def report(self):
        return format_report(self)


@dataclass
class Hierarchy:
    """The model-specific ingredients of the GL-type hierarchy."""
    model: object
    expansions: tuple
    coupling: sp.Matrix
    omega: sp.Expr
    psi0: list
    critical: tuple
    swap: dict
    nonlinearity: object
    beta: int = 2

    @property
    def n_components(self):
        return len(self.expansions)

    @property
    def amplitudes(self):
        return [mode.amplitude for mode in self.critical if mode.primary]

    def operator(self, harmonic):
        k_x, k_t = harmonic
        diagonal = [apply_level_harmonic(e, 0, (k_x,), sp.Integer(1), (XB,)) for e in self.expansions]
        matrix = sp.I * k_t * self.omega * sp.eye(self.n_components) - self.coupling - sp.diag(*diagonal)
        return matrix.applyfunc(sp.expand)

    def mode(self, harmonic):
        for mode in self.critical:
            if mode.harmonic == tuple(harmonic):
                return mode
        return None

    def empty(self):
        return HarmonicSeries(dims=2, max_order=self.beta + 1, limit=HARMONIC_LIMIT)


def _swap_pairs(*pairs):
    swap = {}
    for a, ac in pairs:
        swap[a] = ac
        swap[ac] = a
    return swap


def _swift_hohenberg(m):
    A, Ac = amplitude("A"), amplitude("Ac")

    def nonlinearity(U, mu):
        (u,) = U
        return [mu * u - u ** 3]

    one = sp.Matrix([1])
    return Hierarchy(
        model=m,
        expansions=(expand_operator(swift_hohenberg_operator()),),
        coupling=sp.zeros(1, 1),
        omega=sp.Integer(1),
        psi0=[{(1, 0): A, (-1, 0): Ac}],
        critical=(CriticalMode((1, 0), A, one, True), CriticalMode((-1, 0), Ac, one, False)),
        swap=_swap_pairs((A, Ac)),
        nonlinearity=nonlinearity,
    )


def _brusselator(m):
    a, d1, d2 = exact(m.a), exact(m.d1), exact(m.d2)
    w = 1 + a ** 2
    A, Ac = amplitude("A"), amplitude("Ac")
    phi2 = sp.expand(-1 + sp.I / a)
    phi2c = sp.expand(-1 - sp.I / a)

    def nonlinearity(U, mu):
        u, v = U
        f = u * u * (w / a) + mu * u * u * (w / a) + u * v * (2 * a) + u * u * v
        return [mu * u * w + f, -(mu * u * w) - f]

    # the slow forcing -eps (1 + a^2)/a sits at order r**(2 + beta) and never reaches the matching equations
    return Hierarchy(
        model=m,
        expansions=tuple(expand_operator(op) for op in brusselator_operators(d1, d2, 1)),
        coupling=sp.Matrix([[a ** 2, a ** 2], [-w, -a ** 2]]),
        omega=a,
        psi0=[{(0, 1): A, (0, -1): Ac}, {(0, 1): phi2 * A, (0, -1): phi2c * Ac}],
        critical=(
            CriticalMode((0, 1), A, sp.Matrix([1, phi2]), True),
            CriticalMode((0, -1), Ac, sp.Matrix([1, phi2c]), False),
        ),
        swap=_swap_pairs((A, Ac)),
        nonlinearity=nonlinearity,
    )


def _coupled_ks(m):
    A1, A1c, A2, A2c = amplitude("A1"), amplitude("A1c"), amplitude("A2"), amplitude("A2c")

    def nonlinearity(U, mu):
        u, v = U
        flux = (u * u + u * v + v * v).dx_total(XB)
        return [mu * u + flux, mu * v + flux]

    # A2 rides the mirror wave e^{-i(x + t)} so both equations share gamma1, gamma2
    e1, e2 = sp.Matrix([1, 0]), sp.Matrix([0, 1])
    return Hierarchy(
        model=m,
        expansions=tuple(expand_operator(op) for op in coupled_ks_operators()),
        coupling=sp.zeros(2, 2),
        omega=sp.Integer(1),
        psi0=[{(1, -1): A1, (-1, 1): A1c}, {(-1, -1): A2, (1, 1): A2c}],
        critical=(
            CriticalMode((1, -1), A1, e1, True),
            CriticalMode((-1, -1), A2, e2, True),
            CriticalMode((-1, 1), A1c, e1, False),
            CriticalMode((1, 1), A2c, e2, False),
        ),
        swap=_swap_pairs((A1, A1c), (A2, A2c)),
        nonlinearity=nonlinearity,
    )


def hierarchy(m):
    builders = {
        ModelId.SWIFT_HOHENBERG: _swift_hohenberg,
        ModelId.BRUSSELATOR: _brusselator,
        ModelId.COUPLED_KS: _coupled_ks,
    }
    if m.id not in builders:
        raise DerivationError(f"{m.id.value} has no fast spatial harmonics; use derive_m4_hierarchy")
    return builders[m.id](m)


def _as_hierarchy(model_or_hierarchy):
    if isinstance(model_or_hierarchy, Hierarchy):
        return model_or_hierarchy
    return hierarchy(model_or_hierarchy)


def _graded_field(h, series, j):
    """U_j = sum_nu r**(nu + 1) psi_j^(nu) over the known orders."""
    terms = {}
    for nu, order in enumerate(series.orders):
        for k, value in order[j].items():
            terms[(nu + 1,) + tuple(k)] = value
    return HarmonicSeries(terms, dims=2, max_order=h.beta + 1, limit=HARMONIC_LIMIT)


def assemble_matching(h, nu, series):
    """B^(nu) = sum_{q=1..nu} L^(q) psi^(nu-q) + N^(nu), plus the slow time derivative at nu = beta."""
    h = _as_hierarchy(h)
    if nu > h.beta:
        raise DerivationError(f"Order {nu} exceeds the truncation order {h.beta}")
    if series.depth < nu:
        raise DerivationError(f"Order {nu} needs psi^(0..{nu - 1}), only {series.depth} orders are known")
    if nu == 0:
        return MatchingRHS(0, [{} for _ in range(h.n_components)])

    totals = [h.empty() for _ in range(h.n_components)]
    fields = [_graded_field(h, series, j) for j in range(h.n_components)]
    mu = HarmonicSeries({(2, 0, 0): MUBAR}, dims=2, max_order=h.beta + 1, limit=HARMONIC_LIMIT)
    for j, nonlinear in enumerate(h.nonlinearity(fields, mu)):
        totals[j] = totals[j] + HarmonicSeries.from_harmonics(
            nonlinear.at_order(nu + 1), 0, dims=2, max_order=h.beta + 1, limit=HARMONIC_LIMIT
        )

    for q in range(1, nu + 1):
        for j in range(h.n_components):
            lower = series.orders[nu - q][j]
            terms = {(0,) + k: apply_level_harmonic(h.expansions[j], q, (k[0],), value, (XB,))
                     for k, value in lower.items()}
            totals[j] = totals[j] + HarmonicSeries(terms, dims=2, max_order=h.beta + 1, limit=HARMONIC_LIMIT)

    if nu == h.beta:
        for j, component in enumerate(h.psi0):
            terms = {(0,) + k: -(sp.diff(value, TB) + RHO * value) for k, value in component.items()}
            totals[j] = totals[j] + HarmonicSeries(terms, dims=2, max_order=h.beta + 1, limit=HARMONIC_LIMIT)

    components = []
    for total in totals:
        expanded = {k: sp.expand(v) for k, v in total.at_order(0).items()}
        components.append({k: v for k, v in expanded.items() if v != 0})
    return MatchingRHS(nu, components)


def check_reality(h, rhs):
    """True when every harmonic -k carries the conjugate of harmonic k."""
    for component in rhs.components:
        for k, value in component.items():
            partner = component.get(tuple(-j for j in k), sp.Integer(0))
            if sp.expand(conjugate_expr(value, h.swap) - partner) != 0:
                return False
    return True


def _left_null_vector(h, mode):
    operator = h.operator(mode.harmonic)
    null = operator.T.nullspace()
    if len(null) != 1:
        raise DerivationError(f"Critical harmonic {mode.harmonic} has a {len(null)}-dimensional left kernel")
    y = null[0].T
    norm = sp.expand((y * mode.phi)[0])
    if norm == 0:
        raise DerivationError(f"Critical harmonic {mode.harmonic} is not semisimple")
    return (y / norm).applyfunc(sp.expand)


def project(h, rhs, mode):
    return sp.expand((_left_null_vector(h, mode) * rhs.vector(mode.harmonic))[0])


def solve_order(h, rhs, harmonic_order="sorted"):
    """Inverts (d/dt - M - L^(0)) harmonic by harmonic; homogeneous parts are set to zero."""
    h = _as_hierarchy(h)
    harmonics = rhs.harmonics()
    if harmonic_order == "reversed":
        harmonics = harmonics[::-1]
    solution = [{} for _ in range(h.n_components)]
    for k in harmonics:
        b = rhs.vector(k)
        if all(sp.expand(entry) == 0 for entry in b):
            continue
        operator = h.operator(k)
        if sp.expand(operator.det()) != 0:
            x = operator.LUsolve(b)
        else:
            mode = h.mode(k)
            if mode is None:
                raise DerivationError(f"Operator is singular at non-critical harmonic {k}")
            if project(h, rhs, mode) != 0:
                raise DerivationError(f"Unresolved resonance at harmonic {k} in order {rhs.order}")
            x, params = operator.gauss_jordan_solve(b)
            x = x.subs({p: 0 for p in params})
        for j in range(h.n_components):
            value = sp.expand(x[j])
            if value != 0:
                solution[j][k] = value
    return solution


def absorb_advection(h, rhs):
    """
    Removes resonant transport terms -c dA/dxbar from a sub-critical order and
    returns the reduced right-hand side with the transport speed of the first
    amplitude (None when nothing resonates).
    """
    components = [dict(component) for component in rhs.components]
    speeds = {}
    for mode in h.critical:
        p = project(h, rhs, mode)
        if p == 0:
            continue
        gradient = sp.Derivative(mode.amplitude, XB)
        coefficient = p.coeff(gradient)
        if coefficient == 0 or sp.expand(p - coefficient * gradient) != 0:
            raise DerivationError(f"Resonant forcing at harmonic {mode.harmonic} in order {rhs.order} is not transport")
        speeds[mode.amplitude] = -coefficient
        for j in range(h.n_components):
            value = sp.expand(components[j].get(mode.harmonic, 0) - p * mode.phi[j])
            if value == 0:
                components[j].pop(mode.harmonic, None)
            else:
                components[j][mode.harmonic] = value
    if not speeds:
        return rhs, None
    first = h.amplitudes[0]
    speed = complex(speeds[first])
    if abs(speed.imag) > 0:
        raise DerivationError(f"Transport speed {speed} is not real")
    reference = group_velocity(h.model)
    if abs(speed.real - reference) > GROUP_VELOCITY_TOL:
        raise DerivationError(f"Transport speed {speed.real} disagrees with group velocity {reference}")
    logging.info(f"Absorbed transport at speed {speed.real} in order {rhs.order}")
    return MatchingRHS(rhs.order, components), speeds


def solvability(h, rhs):
    """Projects B^(beta) onto the critical modes; returns {A: dA/dtbar} for the primary amplitudes."""
    h = _as_hierarchy(h)
    equations = {}
    for mode in h.critical:
        if not mode.primary:
            continue
        condition = project(h, rhs, mode)
        rate = sp.Derivative(mode.amplitude, TB)
        weight = condition.coeff(rate)
        if weight == 0:
            raise DerivationError(f"Solvability condition at {mode.harmonic} does not involve d{mode.amplitude}/dtbar")
        equations[mode.amplitude] = sp.expand(-(condition - weight * rate) / weight)
    return equations


def _atom_symbols(amplitudes):
    mapping = {}
    for amp in amplitudes:
        name = amp.func.__name__
        mapping[amp] = sp.Symbol(f"{name}_0")
        for n in range(1, MAX_SLOW_DERIVATIVE + 1):
            mapping[sp.Derivative(amp, (XB, n))] = sp.Symbol(f"{name}_{n}")
    return mapping


def _monomials(expr, amplitudes, extra=(MUBAR, RHO)):
    mapping = _atom_symbols(amplitudes)
    plain = sp.expand(expr.xreplace(mapping))
    if plain.atoms(sp.Derivative) or plain.atoms(sp.core.function.AppliedUndef):
        raise DerivationError(f"Amplitude equation keeps unexpected terms: {plain}")
    gens = list(mapping.values()) + list(extra)
    poly = sp.Poly(plain, *gens)
    names = [str(g) for g in gens]
    out = {}
    for powers, coefficient in poly.terms():
        key = tuple(sorted((names[i], p) for i, p in enumerate(powers) if p))
        out[key] = sp.expand(coefficient)
    return out


def _as_complex(value):
    return complex(sp.N(value, 30))


def extract_coefficients(h, equations, series, speeds=None):
    """Reads the GL-type coefficients off the amplitude equations."""
    all_amplitudes = [mode.amplitude for mode in h.critical]
    primaries = h.amplitudes
    found = []
    for amp in primaries:
        conj = h.swap[amp]
        name, cname = amp.func.__name__, conj.func.__name__
        terms = _monomials(equations[amp], all_amplitudes)
        expected = {
            "diffusion": ((f"{name}_2", 1),),
            "weight": tuple(sorted(((f"{name}_0", 1), ("mubar", 1)))),
            "drift": tuple(sorted(((f"{name}_0", 1), ("rho", 1)))),
            "self": tuple(sorted(((f"{name}_0", 2), (f"{cname}_0", 1)))),
        }
        for other in primaries:
            if other is amp:
                continue
            oname, ocname = other.func.__name__, h.swap[other].func.__name__
            expected["cross"] = tuple(sorted(((f"{name}_0", 1), (f"{oname}_0", 1), (f"{ocname}_0", 1))))
        values = {label: terms.pop(key, sp.Integer(0)) for label, key in expected.items()}
        if terms:
            raise DerivationError(f"Unexpected terms {sorted(terms)} in the {name} equation")
        if values["drift"] != -1:
            raise DerivationError(f"Drift marker enters the {name} equation with weight {values['drift']}")
        found.append(values)

    for other in found[1:]:
        for label in ("diffusion", "weight", "self", "cross"):
            if sp.expand(other.get(label, 0) - found[0].get(label, 0)) != 0:
                raise DerivationError(f"Coupled amplitude equations disagree on the {label} coefficient")

    values = found[0]
    advection = 0.0
    if speeds:
        advection = _as_complex(speeds[primaries[0]]).real
    coefficients = ModulationCoefficients(
        model=h.model.id,
        linear_diffusion=_as_complex(values["diffusion"]),
        mu_weight=_as_complex(values["weight"]),
        drift_linear=values["weight"] * MUBAR - RHO,
        advection=advection,
        cubic_self=_as_complex(values["self"]),
        cubic_cross=_as_complex(values.get("cross", 0)),
        exact_values=values,
    )
    _intermediates(h, series, coefficients)
    return coefficients


def _intermediates(h, series, coefficients):
    if h.model.id is ModelId.BRUSSELATOR:
        A, first = h.amplitudes[0], series.orders[1]
        coefficients.intermediates["V"] = tuple(sp.expand(first[j].get((0, 2), 0) / A ** 2) for j in range(2))
        coefficients.intermediates["V0"] = tuple(
            sp.expand(first[j].get((0, 0), 0) / (A * h.swap[A])) for j in range(2)
        )
        c1, c2, c3 = brusselator_coefficients(h.model.a, h.model.d1, h.model.d2)
        coefficients.printed.update({"c1": c1, "c2": c2, "c3": c3})
    elif h.model.id is ModelId.COUPLED_KS:
        A1, A2 = h.amplitudes
        first = series.orders[1]
        v2 = sp.expand(first[0].get((2, -2), 0) / A1 ** 2)
        eta2 = sp.expand(first[1].get((2, -2), 0) / A1 ** 2)
        A2c = h.swap[A2]
        v3 = sp.expand(first[0].get((2, 0), 0) / (A1 * A2c))
        eta3 = sp.expand(first[1].get((2, 0), 0) / (A1 * A2c))
        coefficients.intermediates.update({"v2": v2, "eta2": eta2, "v3": v3, "eta3": eta3})
        coefficients.printed["gamma1"] = _as_complex(-sp.I * (v2 + eta2))
        coefficients.printed["gamma2"] = _as_complex(-sp.I * (v3 + eta3))


def derive(m, harmonic_order="sorted"):
    """Runs the hierarchy up to the solvability order and returns the amplitude equation."""
    if m.id is ModelId.KOLMOGOROV:
        return derive_m4_hierarchy(m)
    logging.info(f"Deriving modulation equation for {m.describe()}")
    h = hierarchy(m)
    series = AnsatzSeries([h.psi0])
    matching = [assemble_matching(h, 0, series)]
    speeds = None
    for nu in range(1, h.beta):
        rhs = assemble_matching(h, nu, series)
        matching.append(rhs)
        if not check_reality(h, rhs):
            raise DerivationError(f"Order {nu} right-hand side is not closed under conjugation")
        rhs, found = absorb_advection(h, rhs)
        speeds = found or speeds
        series.orders.append(solve_order(h, rhs, harmonic_order))
        logging.debug(f"Order {nu}: {sum(len(c) for c in series.orders[nu])} harmonics")
    final = assemble_matching(h, h.beta, series)
    matching.append(final)
    if not check_reality(h, final):
        raise DerivationError(f"Order {h.beta} right-hand side is not closed under conjugation")
    equations = solvability(h, final)
    coefficients = extract_coefficients(h, equations, series, speeds)
    if speeds:
        for amp, speed in speeds.items():
            if amp in equations:
                equations[amp] = sp.expand(equations[amp] - speed * sp.Derivative(amp, XB))
    logging.info(f"Derived {m.id.value}: c1={coefficients.c1}, c2={coefficients.c2}, cubic={coefficients.cubic_self}")
    return DerivationResult(m, coefficients, equations, matching, series)


# Kolmogorov flow: long-wave recurrence in the periodic y-direction.

def _y_series(expr=0):
    return HarmonicSeries.constant(expr, 0, 1, 0, Y_HARMONIC_LIMIT)


def _y_level(expansion, grade, f):
    """L^(grade) on an x-independent field; words with a fast x-derivative vanish."""
    total = _y_series()
    for word in expansion.words(grade):
        if word.fast_powers[0]:
            continue
        term = f
        for _ in range(word.fast_powers[1]):
            term = term.d_fast(0)
        for _ in range(word.slow_powers[0]):
            term = term.d_slow(XB)
        if word.tag is CoefficientTag.SIN_Y:
            term = trig_series("sin") * term
        elif word.tag is CoefficientTag.COS_Y:
            term = trig_series("cos") * term
        total = total + term * word.coefficient
    return total


def to_trig(series):
    """Real sin/cos form of a y-series."""
    total = sp.Integer(0)
    for (_, n), value in series.terms.items():
        total += value * (sp.cos(n * Y) + sp.I * sp.sin(n * Y))
    return sp.expand(total)


def derive_m4_hierarchy(m):
    """
    Orders k = 0..3 of the streamwise velocity u_k, cross-stream velocity v_k
    and pressure P_k with u = sum r**(k+1) u_k, v = sum r**(k+1) v_k,
    p = sum r**(k+2) P_k and R = sqrt(2) + r**2 Rbar. The mean of the pressure
    equation at k = 3 is the amplitude equation for v_0 = A.
    """
    logging.info(f"Deriving modulation equation for {m.describe()}")
    A = amplitude("A")
    q = sp.sqrt(2)
    rbar = MUBAR
    expansion = expand_operator(kolmogorov_operator())
    s, c = trig_series("sin"), trig_series("cos")
    zero = _y_series()
    u, v, p = {}, {}, {}
    gradients = {}

    def get(d, i):
        return d.get(i, zero) if i >= 0 else zero

    def dx(f):
        return f.d_slow(XB)

    def dy(f):
        return f.d_fast(0)

    def pairs(left, right, k, op):
        total = zero
        for i in range(k + 1):
            total = total + get(left, i) * op(get(right, k - i))
        return total

    v[0] = _y_series(A)
    solvability_condition = None
    for k in range(4):
        if k > 0:
            flux = -dx(get(u, k - 1))
            if sp.expand(flux.mean()) != 0:
                raise DerivationError(f"Continuity at order {k} has a nonzero mean")
            v[k] = flux.antiderivative()
        if k <= 2:
            forcing = (
                c * v[k] * q
                - _y_level(expansion, 1, get(u, k - 1))
                - _y_level(expansion, 2, get(u, k - 2))
                + pairs(v, u, k - 1, dy)
                + pairs(u, u, k - 2, dx)
                + dx(get(p, k - 2))
                + c * get(v, k - 2) * rbar
                + s * dx(get(u, k - 3)) * rbar
            ).expanded()
            mean = sp.expand(forcing.mean())
            if mean != 0:
                if k < 2:
                    raise DerivationError(f"Streamwise forcing at order {k} has a mean that no pressure can balance")
                gradients[k - 2] = -mean
            u[k] = forcing.without_mean().antiderivative().antiderivative().expanded()
        # d/dy of a periodic field has zero mean, so the unknown u_3 never enters the k = 3 mean
        source = (
            -dx(dy(get(u, k)))
            + _y_level(expansion, 1, v[k])
            - pairs(v, v, k, dy)
            - pairs(u, v, k - 1, dx)
            + _y_level(expansion, 2, get(v, k - 1))
            - s * dx(get(v, k - 2)) * rbar
            - (get(v, k - 3).d_slow(TB) + get(v, k - 3) * RHO)
        ).expanded()
        mean = sp.expand(source.mean())
        if k < 3:
            if mean != 0:
                raise DerivationError(f"Pressure equation at order {k} has a nonzero mean")
            p[k] = source.antiderivative().expanded()
        else:
            solvability_condition = mean

    rate = sp.Derivative(A, TB)
    weight = solvability_condition.coeff(rate)
    if weight == 0:
        raise DerivationError("Pressure solvability does not involve dA/dtbar")
    equation = sp.expand(-(solvability_condition - weight * rate) / weight)
    coefficients = _cahn_hilliard_coefficients(m, equation, A)
    profiles = {
        "u0": to_trig(u[0]), "v0": to_trig(v[0]), "p0": to_trig(p[0]),
        "u1": to_trig(u[1]), "v1": to_trig(v[1]),
        "u2": to_trig(u[2]), "v2": to_trig(v[2]), "v3": to_trig(v[3]),
        "dC0": gradients.get(0, sp.Integer(0)),
    }
    logging.info(f"Derived {m.id.value}: fourth={coefficients.ch_fourth}, cubic={coefficients.ch_cubic}")
    return DerivationResult(m, coefficients, {A: equation}, profiles=profiles)


def _cahn_hilliard_coefficients(m, equation, A):
    terms = _monomials(equation, [A])
    fourth = terms.pop((("A_4", 1),), sp.Integer(0))
    second = terms.pop(tuple(sorted((("A_2", 1), ("mubar", 1)))), sp.Integer(0))
    drift = terms.pop(tuple(sorted((("A_0", 1), ("rho", 1)))), sp.Integer(0))
    # (A^3)'' = 3 A^2 A'' + 6 A A'^2
    curvature = terms.pop(tuple(sorted((("A_0", 2), ("A_2", 1)))), sp.Integer(0))
    slope = terms.pop(tuple(sorted((("A_0", 1), ("A_1", 2)))), sp.Integer(0))
    if terms:
        raise DerivationError(f"Unexpected terms {sorted(terms)} in the Kolmogorov amplitude equation")
    if sp.expand(slope - 2 * curvature) != 0:
        raise DerivationError("Cubic terms are not a second derivative of A^3")
    if drift != -1:
        raise DerivationError(f"Drift marker enters with weight {drift}")
    cubic = sp.expand(curvature / 3)
    return ModulationCoefficients(
        model=m.id,
        drift_linear=-RHO,
        ch_fourth=float(fourth),
        ch_second=float(second),
        ch_cubic=float(cubic),
        exact_values={"fourth": fourth, "second": second, "cubic": cubic},
    )


def format_complex(value, digits=12):
    value = complex(value)
    if value.imag == 0:
        return f"{value.real:.{digits}g}"
    sign = "+" if value.imag >= 0 else "-"
    return f"{value.real:.{digits}g} {sign} {abs(value.imag):.{digits}g}i"


def format_report(result):
    """Plain-text derivation report: matching tables, amplitude equation and coefficients."""
    m = result.model
    lines = [f"Modulation equation derivation: {m.describe()}", ""]
    for rhs in result.matching:
        lines.append(f"Order {rhs.order} right-hand side:")
        if rhs.is_zero():
            lines.append("  0")
        for j, component in enumerate(rhs.components):
            for k in sorted(component):
                lines.append(f"  component {j + 1}, harmonic {k}: {sp.sstr(component[k])}")
        lines.append("")
    if result.series is not None:
        for nu, order in enumerate(result.series.orders):
            lines.append(f"psi^({nu}):")
            for j, component in enumerate(order):
                for k in sorted(component):
                    lines.append(f"  component {j + 1}, harmonic {k}: {sp.sstr(component[k])}")
        lines.append("")
    for name, profile in result.profiles.items():
        lines.append(f"{name} = {sp.sstr(profile)}")
    if result.profiles:
        lines.append("")
    lines.append("Amplitude equations:")
    for amp, rhs in result.equations.items():
        lines.append(f"  d{amp.func.__name__}/dtb = {sp.sstr(rhs)}")
    lines.append("")
    coefficients = result.coefficients
    lines.append("Coefficients:")
    if m.id is ModelId.KOLMOGOROV:
        lines.append(f"  fourth order = {format_complex(coefficients.ch_fourth)}")
        lines.append(f"  second order (times Rbar) = {format_complex(coefficients.ch_second)}")
        lines.append(f"  cubic (A^3)'' = {format_complex(coefficients.ch_cubic)}")
    else:
        lines.append(f"  diffusion c1 = {format_complex(coefficients.c1)}")
        lines.append(f"  drift weight c2 = {format_complex(coefficients.c2)}")
        lines.append(f"  cubic c3 = {format_complex(coefficients.c3)}")
        if m.id is ModelId.COUPLED_KS:
            lines.append(f"  cross gamma2 = {format_complex(coefficients.gamma2)}")
            lines.append(f"  advection c = {format_complex(coefficients.advection)}")
    for name, value in coefficients.printed.items():
        lines.append(f"  printed {name} = {format_complex(value)}")
    lines.append(f"  drift term = {sp.sstr(coefficients.drift_linear)}")
    return "\n".join(lines) + "\n"
