"""
Exact truncated series in powers of r and Fourier harmonics.

A term is keyed by (order, k_1, ..., k_d) and stands for

    coefficient * r**order * exp(i (k_1 z_1 + ... + k_d z_d))

with sympy coefficients that may depend on the slow variables. Products are
truncated convolutions: orders above `max_order` and harmonics with
|k_j| > `limit` are dropped.
"""
import sympy as sp


def conjugate_expr(expr, swap):
    """Complex conjugate of an expression whose amplitudes are listed as {A: Ac, Ac: A}."""
    mapping = dict(swap)
    mapping[sp.I] = -sp.I
    return sp.expand(sp.sympify(expr).xreplace(mapping))


class HarmonicSeries:
    def __init__(self, terms=None, dims=1, max_order=0, limit=3):
        self.dims = dims
        self.max_order = max_order
        self.limit = limit
        self.terms = {}
        for key, value in (terms or {}).items():
            self._accumulate(tuple(key), value)

    def _accumulate(self, key, value):
        if len(key) != self.dims + 1:
            raise ValueError(f"Key {key} does not match {self.dims} harmonic dimensions")
        if key[0] > self.max_order or any(abs(k) > self.limit for k in key[1:]):
            return
        value = sp.sympify(value)
        if value == 0:
            return
        total = self.terms.get(key, 0) + value
        if total == 0:
            self.terms.pop(key, None)
        else:
            self.terms[key] = total

    def _like(self, terms=None):
        return HarmonicSeries(terms, self.dims, self.max_order, self.limit)

    @classmethod
    def constant(cls, value, order=0, dims=1, max_order=0, limit=3):
        return cls({(order,) + (0,) * dims: value}, dims, max_order, limit)

    def copy(self):
        return self._like(self.terms)

    def __add__(self, other):
        if not isinstance(other, HarmonicSeries):
            other = self.constant(other, 0, self.dims, self.max_order, self.limit)
        out = self.copy()
        for key, value in other.terms.items():
            out._accumulate(key, value)
        return out

    __radd__ = __add__

    def __neg__(self):
        return self._like({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, HarmonicSeries):
            factor = sp.sympify(other)
            return self._like({k: factor * v for k, v in self.terms.items()})
        out = self._like()
        for ka, va in self.terms.items():
            for kb, vb in other.terms.items():
                key = tuple(a + b for a, b in zip(ka, kb))
                out._accumulate(key, va * vb)
        return out

    __rmul__ = __mul__

    def __pow__(self, n):
        out = self.constant(1, 0, self.dims, self.max_order, self.limit)
        for _ in range(n):
            out = out * self
        return out

    def shift(self, n):
        """Multiplies by r**n."""
        return self._like({(k[0] + n,) + k[1:]: v for k, v in self.terms.items()})

    def map(self, fn):
        return self._like({k: fn(v) for k, v in self.terms.items()})

    def d_fast(self, axis=0, scale=1):
        """Derivative along a fast coordinate: multiplies harmonic k by i*k*scale."""
        return self._like({k: sp.I * k[1 + axis] * scale * v for k, v in self.terms.items()})

    def d_slow(self, symbol):
        return self.map(lambda v: sp.diff(v, symbol))

    def dx_total(self, slow_symbol, axis=0):
        """d/dx -> d/dx + r d/dxbar."""
        return self.d_fast(axis) + self.d_slow(slow_symbol).shift(1)

    def at_order(self, order):
        return {k[1:]: v for k, v in self.terms.items() if k[0] == order}

    @classmethod
    def from_harmonics(cls, harmonics, order, dims=1, max_order=0, limit=3):
        return cls({(order,) + tuple(k): v for k, v in harmonics.items()}, dims, max_order, limit)

    def mean(self, order=0):
        return self.terms.get((order,) + (0,) * self.dims, sp.Integer(0))

    def antiderivative(self, axis=0):
        """Zero-mean antiderivative along a fast coordinate; the mean part is dropped."""
        return self._like({k: v / (sp.I * k[1 + axis]) for k, v in self.terms.items() if k[1 + axis] != 0})

    def without_mean(self, axis=0):
        return self._like({k: v for k, v in self.terms.items() if k[1 + axis] != 0})

    def expanded(self):
        return self._like({k: sp.expand(v) for k, v in self.terms.items()})

    def conjugate(self, swap):
        return self._like({
            (k[0],) + tuple(-j for j in k[1:]): conjugate_expr(v, swap) for k, v in self.terms.items()
        })

    def is_zero(self):
        return all(sp.expand(v) == 0 for v in self.terms.values())

    def __repr__(self):
        return f"HarmonicSeries({self.terms!r})"


def trig_series(kind, dims=1, max_order=0, limit=32):
    """sin(y) or cos(y) as a one-dimensional harmonic series."""
    if kind == "cos":
        terms = {(0, 1): sp.Rational(1, 2), (0, -1): sp.Rational(1, 2)}
    else:
        terms = {(0, 1): -sp.I / 2, (0, -1): sp.I / 2}
    return HarmonicSeries(terms, dims, max_order, limit)
