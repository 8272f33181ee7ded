"""
Exponential time differencing (ETD-RK4) and IMEX-BDF2 steppers for
semilinear systems v' = L v + N(v, t) in Fourier space.

The linear part is either diagonal (one symbol value per mode and
component) or a small dense matrix per mode, stored as (n, n, *modes) and
acting on state arrays of shape (n, *modes).

References:

  Kassam and Trefethen, Fourth-order time-stepping for stiff PDEs (2005).
  Cox and Matthews, Exponential time differencing for stiff systems (2002).
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

CONTOUR_ROOTS = 32


def contour_roots(n_roots=CONTOUR_ROOTS):
    # full circle so that complex symbols are handled as well as real ones
    return np.exp(2j * np.pi * (np.arange(n_roots) + 0.5) / n_roots)


@dataclass(frozen=True)
class ETDCoefficients:
    exp_full: np.ndarray
    exp_half: np.ndarray
    q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray


def etdrk4_coefficients(linear, dt, n_roots=CONTOUR_ROOTS):
    """Contour-averaged ETD-RK4 weights for a diagonal symbol of any shape."""
    linear = np.asarray(linear)
    lr = dt * linear[..., None] + contour_roots(n_roots)
    lr2, lr3 = lr * lr, lr ** 3
    exp_lr = np.exp(lr)
    q = dt * ((np.exp(lr / 2.0) - 1.0) / lr).mean(-1)
    f1 = dt * ((-4.0 - lr + exp_lr * (4.0 - 3.0 * lr + lr2)) / lr3).mean(-1)
    f2 = dt * ((2.0 + lr + exp_lr * (lr - 2.0)) / lr3).mean(-1)
    f3 = dt * ((-4.0 - 3.0 * lr - lr2 + exp_lr * (4.0 - lr)) / lr3).mean(-1)
    coefficients = [np.exp(dt * linear), np.exp(0.5 * dt * linear), q, f1, f2, f3]
    if np.isrealobj(linear):
        coefficients = [np.real(c) for c in coefficients]
    return ETDCoefficients(*coefficients)


def matrix_etdrk4_coefficients(linear, dt, n_roots=CONTOUR_ROOTS):
    """
    Matrix version of etdrk4_coefficients for symbols of shape (n, n, *modes).

    Each phi-function is averaged over the shifted matrices dt*L + z_j I, so
    defective symbols (coalescing eigenvalues) need no special treatment.
    """
    linear = np.asarray(linear)
    size = linear.shape[0]
    a = np.moveaxis(linear, (0, 1), (-2, -1)) * dt
    eye = np.eye(size)
    q = np.zeros(a.shape, dtype=complex)
    f1, f2, f3 = q.copy(), q.copy(), q.copy()
    for root in contour_roots(n_roots):
        z = a + root * eye
        z2 = z @ z
        inv = np.linalg.inv(z)
        inv3 = inv @ inv @ inv
        exp_z = linalg.expm(z)
        q += (linalg.expm(0.5 * z) - eye) @ inv
        f1 += (-4.0 * eye - z + exp_z @ (4.0 * eye - 3.0 * z + z2)) @ inv3
        f2 += (2.0 * eye + z + exp_z @ (z - 2.0 * eye)) @ inv3
        f3 += (-4.0 * eye - 3.0 * z - z2 + exp_z @ (4.0 * eye - z)) @ inv3
    coefficients = [linalg.expm(a), linalg.expm(0.5 * a)] + [dt * c / n_roots for c in (q, f1, f2, f3)]
    if np.isrealobj(linear):
        coefficients = [np.real(c) for c in coefficients]
    return ETDCoefficients(*[np.moveaxis(c, (-2, -1), (0, 1)) for c in coefficients])


def _diagonal_apply(c, v):
    return c * v


def _matrix_apply(c, v):
    return np.einsum("ij...,j...->i...", c, v)


class ETDRK4:
    """
    Fourth-order exponential Runge-Kutta stepper (Cox-Matthews form).

    The nonlinear callable is passed per step so that one set of cached
    coefficients serves any forcing with the same linear symbol.
    """

    def __init__(self, linear, dt, matrix=False, n_roots=CONTOUR_ROOTS):
        self.dt = dt
        self.matrix = matrix
        if matrix:
            self.coefficients = matrix_etdrk4_coefficients(linear, dt, n_roots)
            self._apply = _matrix_apply
        else:
            self.coefficients = etdrk4_coefficients(linear, dt, n_roots)
            self._apply = _diagonal_apply
        logging.debug(f"ETD-RK4 coefficients ready (dt={dt}, matrix={matrix})")

    def step(self, v, t, nonlinear):
        c, apply, dt = self.coefficients, self._apply, self.dt
        n_v = nonlinear(v, t)
        a = apply(c.exp_half, v) + apply(c.q, n_v)
        n_a = nonlinear(a, t + 0.5 * dt)
        b = apply(c.exp_half, v) + apply(c.q, n_a)
        n_b = nonlinear(b, t + 0.5 * dt)
        cc = apply(c.exp_half, a) + apply(c.q, 2.0 * n_b - n_v)
        n_c = nonlinear(cc, t + dt)
        return (apply(c.exp_full, v) + apply(c.f1, n_v)
                + 2.0 * apply(c.f2, n_a + n_b) + apply(c.f3, n_c))


class IMEXBDF2:
    """
    Second-order semi-implicit BDF (SBDF2): implicit linear part, extrapolated
    explicit nonlinearity. The first step is IMEX Euler.

    step() returns the new state and a history tuple to pass back next time.
    """

    def __init__(self, linear, dt, matrix=False):
        self.dt = dt
        self.matrix = matrix
        linear = np.asarray(linear)
        if matrix:
            a = np.moveaxis(linear, (0, 1), (-2, -1))
            eye = np.eye(a.shape[-1])
            self._euler = np.linalg.inv(eye - dt * a)
            self._bdf = np.linalg.inv(3.0 * eye - 2.0 * dt * a)
            self._euler = np.moveaxis(self._euler, (-2, -1), (0, 1))
            self._bdf = np.moveaxis(self._bdf, (-2, -1), (0, 1))
            self._apply = _matrix_apply
        else:
            self._euler = 1.0 / (1.0 - dt * linear)
            self._bdf = 1.0 / (3.0 - 2.0 * dt * linear)
            self._apply = _diagonal_apply

    def step(self, v, t, nonlinear, history=None):
        n_v = nonlinear(v, t)
        if history is None:
            out = self._apply(self._euler, v + self.dt * n_v)
        else:
            v_prev, n_prev = history
            rhs = 4.0 * v - v_prev + 2.0 * self.dt * (2.0 * n_v - n_prev)
            out = self._apply(self._bdf, rhs)
        return out, (v, n_v)
