"""
Graded expansion of linear differential operators under the substitution

    d/dx_k  ->  d/dx_k + r d/dxbar_k     (k < p, the unbounded directions)

Each monomial D^alpha expands by the binomial theorem per direction; collecting
powers of r gives the grades L^(0) = L, L^(1), ..., L^(m). All coefficients
stay exact (sympy integers, rationals or sqrt(2)).
"""
import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import ExpansionOrderError

SAMPLE_POINTS = 33


class CoefficientTag(enum.Enum):
    CONST = "1"
    SIN_Y = "sin(y)"
    COS_Y = "cos(y)"


@dataclass(frozen=True)
class MultiIndex:
    alpha: tuple

    @property
    def order(self):
        return sum(self.alpha)


@dataclass(frozen=True)
class OperatorTerm:
    coefficient: sp.Expr
    alpha: MultiIndex
    tag: CoefficientTag = CoefficientTag.CONST


@dataclass(frozen=True)
class DerivativeWord:
    fast_powers: tuple
    slow_powers: tuple
    coefficient: sp.Expr
    tag: CoefficientTag = CoefficientTag.CONST

    @property
    def grade(self):
        return sum(self.slow_powers)

    def sort_key(self):
        return self.slow_powers, self.fast_powers, self.tag.value


@dataclass(frozen=True)
class OperatorSpec:
    """A scalar linear operator sum_alpha a_alpha(y) D^alpha on n directions, p of them unbounded."""
    terms: tuple
    n: int
    p: int

    def __post_init__(self):
        for term in self.terms:
            if len(term.alpha.alpha) != self.n:
                raise ValueError(f"Multi-index {term.alpha.alpha} does not have {self.n} entries")
            if term.tag is not CoefficientTag.CONST and self.p == self.n:
                raise ValueError("sin(y)/cos(y) coefficients need a bounded direction")

    @property
    def order(self):
        return max((t.alpha.order for t in self.terms), default=0)

    def __add__(self, other):
        if (self.n, self.p) != (other.n, other.p):
            raise ValueError("Operators act on different spaces")
        return OperatorSpec(self.terms + other.terms, self.n, self.p)

    def scaled(self, factor):
        factor = sp.sympify(factor)
        return OperatorSpec(
            tuple(OperatorTerm(factor * t.coefficient, t.alpha, t.tag) for t in self.terms), self.n, self.p
        )


@dataclass(frozen=True)
class GradedExpansion:
    levels: dict
    n: int
    p: int
    order: int = 0
    names: tuple = field(default=(), compare=False)

    def words(self, grade):
        return self.levels.get(grade, ())

    @property
    def grades(self):
        return sorted(g for g, words in self.levels.items() if words)


def _term(coefficient, alpha, tag=CoefficientTag.CONST):
    return OperatorTerm(sp.sympify(coefficient), MultiIndex(tuple(alpha)), tag)


def _normalize(words):
    merged = {}
    for word in words:
        key = (word.tag, word.fast_powers, word.slow_powers)
        merged[key] = merged.get(key, sp.Integer(0)) + word.coefficient
    out = []
    for (tag, fast, slow), coefficient in merged.items():
        coefficient = sp.expand(coefficient)
        if coefficient != 0:
            out.append(DerivativeWord(fast, slow, coefficient, tag))
    return tuple(sorted(out, key=DerivativeWord.sort_key))


def expand_operator(spec):
    """Multinomial expansion of every term; returns the graded expansion."""
    levels = {}
    for term in spec.terms:
        alpha = term.alpha.alpha
        ranges = [range(alpha[k] + 1) for k in range(spec.p)]
        for q in itertools.product(*ranges):
            weight = sp.Integer(1)
            for k, qk in enumerate(q):
                weight *= sp.binomial(alpha[k], qk)
            fast = tuple(alpha[k] - (q[k] if k < spec.p else 0) for k in range(spec.n))
            levels.setdefault(sum(q), []).append(DerivativeWord(fast, tuple(q), term.coefficient * weight, term.tag))
    levels = {grade: _normalize(words) for grade, words in levels.items()}
    return GradedExpansion(
        {g: w for g, w in levels.items() if w}, spec.n, spec.p, spec.order, direction_names(spec.n, spec.p)
    )


def direction_names(n, p):
    if n == 1:
        return ("x",)
    if n == 2 and p == 1:
        return ("x", "y")
    return tuple(f"x{k + 1}" for k in range(n))


def coordinate_symbols(n, p):
    """Fast symbols (one per direction) and slow symbols (one per unbounded direction)."""
    names = direction_names(n, p)
    fast = tuple(sp.Symbol(name, real=True) for name in names)
    slow = tuple(sp.Symbol(f"{names[k]}b" if n == 1 or (n == 2 and p == 1) else f"xb{k + 1}", real=True)
                 for k in range(p))
    return fast, slow


def tag_function(tag, fast):
    if tag is CoefficientTag.CONST:
        return sp.Integer(1)
    y = fast[-1]
    return sp.sin(y) if tag is CoefficientTag.SIN_Y else sp.cos(y)


def apply_word(word, f, fast, slow):
    spec = [(s, k) for s, k in zip(fast, word.fast_powers) if k] + [(s, k) for s, k in zip(slow, word.slow_powers) if k]
    derivative = sp.diff(f, *spec) if spec else f
    return word.coefficient * tag_function(word.tag, fast) * derivative


def apply_level(expansion, grade, f, fast, slow):
    return sp.Add(*[apply_word(w, f, fast, slow) for w in expansion.words(grade)])


def apply_level_harmonic(expansion, grade, wavenumbers, f, slow):
    """
    Applies L^(grade) to f(xbar) exp(i k.x): fast derivatives become powers of
    i k, slow derivatives act on f. Only constant-coefficient words are allowed.
    """
    total = sp.Integer(0)
    for word in expansion.words(grade):
        if word.tag is not CoefficientTag.CONST:
            raise ValueError(f"Word with {word.tag.value} coefficient has no harmonic symbol")
        factor = word.coefficient
        for k, power in zip(wavenumbers, word.fast_powers):
            factor *= (sp.I * k) ** power
        if factor == 0:
            continue
        pairs = [(s, q) for s, q in zip(slow, word.slow_powers) if q]
        total += factor * (sp.diff(f, *pairs) if pairs else f)
    return total


def apply_graded(expansion, series, order, fast, slow):
    """
    Cauchy product of the graded operator with a graded series.

    Returns outputs[s] = sum_q L^(q) series[s - q] for s = 0..order.
    """
    if order >= len(series):
        raise ExpansionOrderError(f"Order {order} needs {order + 1} series entries, got {len(series)}")
    outputs = []
    for s in range(order + 1):
        total = sp.Integer(0)
        for q in range(min(s, expansion.order) + 1):
            total += apply_level(expansion, q, series[s - q], fast, slow)
        outputs.append(total)
    return outputs


def apply_operator(spec, f, fast):
    """Applies the unexpanded operator to a function of the fast variables only."""
    total = sp.Integer(0)
    for term in spec.terms:
        pairs = [(s, k) for s, k in zip(fast, term.alpha.alpha) if k]
        derivative = sp.diff(f, *pairs) if pairs else f
        total += term.coefficient * tag_function(term.tag, fast) * derivative
    return total


def substitution_check(spec, f, r, fast=None, slow=None, n_samples=SAMPLE_POINTS):
    """
    Compares L applied to x -> f(x, r x) with sum_l r^l L^(l) f restricted to
    xbar = r x. Returns the max absolute difference over the sample points.
    """
    if fast is None or slow is None:
        fast, slow = coordinate_symbols(spec.n, spec.p)
    exact_r = sp.Rational(r)
    restrict = {slow[k]: exact_r * fast[k] for k in range(spec.p)}
    direct = apply_operator(spec, sp.sympify(f).subs(restrict), fast)

    expansion = expand_operator(spec)
    graded = sp.Add(*[exact_r ** g * apply_level(expansion, g, f, fast, slow) for g in expansion.grades])
    graded = sp.sympify(graded).subs(restrict)
    if sp.expand(direct - graded) == 0:
        return 0.0

    evaluate_direct = sp.lambdify(fast, direct, "numpy")
    evaluate_graded = sp.lambdify(fast, graded, "numpy")
    base = np.linspace(-np.pi, np.pi, n_samples)
    points = [base + 0.37 * k for k in range(spec.n)]
    a = np.broadcast_to(np.asarray(evaluate_direct(*points), dtype=complex), base.shape)
    b = np.broadcast_to(np.asarray(evaluate_graded(*points), dtype=complex), base.shape)
    return float(np.max(np.abs(a - b)))


def format_word(word, names):
    factors = []
    for name, power in zip(names, word.fast_powers):
        if power:
            factors.append(f"d{name}" + (f"^{power}" if power > 1 else ""))
    for name, power in zip(names, word.slow_powers):
        if power:
            factors.append(f"d{name}bar" + (f"^{power}" if power > 1 else ""))
    if word.tag is not CoefficientTag.CONST:
        factors.insert(0, word.tag.value)
    coefficient = word.coefficient
    if not factors:
        return sp.sstr(coefficient)
    if coefficient == 1:
        return " ".join(factors)
    if coefficient == -1:
        return "-" + " ".join(factors)
    return f"{sp.sstr(coefficient)} " + " ".join(factors)


def format_level(expansion, grade):
    words = expansion.words(grade)
    if not words:
        return "0"
    names = expansion.names or direction_names(expansion.n, expansion.p)
    text = format_word(words[0], names)
    for word in words[1:]:
        piece = format_word(word, names)
        text += f" - {piece[1:]}" if piece.startswith("-") else f" + {piece}"
    return text


# Operator factories for the built-in models.

def swift_hohenberg_operator():
    """-(1 + d_x^2)^2 = -1 - 2 d_x^2 - d_x^4."""
    return OperatorSpec((_term(-1, (0,)), _term(-2, (2,)), _term(-1, (4,))), 1, 1)


def laplacian(n, p=None, coefficient=1):
    p = n if p is None else p
    terms = tuple(_term(coefficient, tuple(2 if j == k else 0 for j in range(n))) for k in range(n))
    return OperatorSpec(terms, n, p)


def coupled_ks_operators():
    """(-(1 + dx^2)^2 - dx, -(1 + dx^2)^2 + dx): the linear part of the coupled KS system."""
    base = swift_hohenberg_operator()
    return (base + OperatorSpec((_term(-1, (1,)),), 1, 1), base + OperatorSpec((_term(1, (1,)),), 1, 1))


def brusselator_operators(d1, d2, dimension=1):
    d1, d2 = sp.Rational(d1), sp.Rational(d2)
    return laplacian(dimension, coefficient=d1), laplacian(dimension, coefficient=d2)


def kolmogorov_operator(reynolds=None):
    """Delta - R sin(y) d_x on (x, y) with x unbounded; R defaults to sqrt(2)."""
    reynolds = sp.sqrt(2) if reynolds is None else sp.sympify(reynolds)
    return laplacian(2, 1) + OperatorSpec((_term(-reynolds, (1, 0), CoefficientTag.SIN_Y),), 2, 1)
