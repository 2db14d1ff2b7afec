"""Vector fields, scalar fields and derivatives along the flow."""

from __future__ import annotations

import math

import numpy as np

from .errors import NonFiniteValue


def _fd_step(v):
    # central-difference step, scaled away from zero per coordinate
    return max(1e-6, 1e-6 * abs(v))


class VectorField:
    """Right-hand side f(t, x) of a nonautonomous system.

    The evaluator must be pure (deterministic, no hidden state) and return a
    vector of the declared dimension.  Analytic Jacobian / time derivative
    are optional; checks fall back to central differences.
    """

    def __init__(self, dimension, evaluator, jacobian=None, dt=None, name=None):
        self.dimension = int(dimension)
        self._eval = evaluator
        self._jac = jacobian
        self._dt = dt
        self.name = name

    def __call__(self, t, x):
        return np.asarray(self._eval(t, np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, t, x):
        if self._jac is not None:
            return np.asarray(self._jac(t, x), dtype=float)
        x = np.asarray(x, dtype=float)
        n = self.dimension
        J = np.empty((n, n))
        for j in range(n):
            h = _fd_step(x[j])
            xp = x.copy(); xp[j] += h
            xm = x.copy(); xm[j] -= h
            J[:, j] = (self(t, xp) - self(t, xm)) / (2 * h)
        return J

    def reversed(self):
        """Field of the time-reversed flow: g(s, y) = -f(-s, y)."""
        return VectorField(self.dimension, lambda s, y: -self(-s, y),
                           name=f"reversed({self.name})" if self.name else None)


class ScalarField:
    """Scalar function U(t, x) with optional analytic gradient and dU/dt.

    batch, when given, evaluates a whole chunk at once: batch(ts, xs) with
    ts of shape (m,) and xs of shape (m, n) returns (m,) values.  Event
    scanning uses it to avoid per-node Python calls.
    """

    def __init__(self, evaluator, grad_x=None, dt=None, name=None, batch=None):
        self._eval = evaluator
        self._grad = grad_x
        self._dt = dt
        self.name = name
        self.batch = batch

    def __call__(self, t, x):
        return float(self._eval(t, np.asarray(x, dtype=float)))

    def grad_x(self, t, x):
        x = np.asarray(x, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(t, x), dtype=float)
        g = np.empty_like(x)
        for j in range(x.shape[0]):
            h = _fd_step(x[j])
            xp = x.copy(); xp[j] += h
            xm = x.copy(); xm[j] -= h
            g[j] = (self(t, xp) - self(t, xm)) / (2 * h)
        return g

    def dt(self, t, x):
        if self._dt is not None:
            return float(self._dt(t, np.asarray(x, dtype=float)))
        h = _fd_step(t)
        return (self(t + h, x) - self(t - h, x)) / (2 * h)

    def has_analytic_derivatives(self):
        return self._grad is not None and self._dt is not None


def lie_derivative(U: ScalarField, field: VectorField, t, x):
    """Derivative of U along the flow of the field: dU/dt + <grad_x U, f>."""
    x = np.asarray(x, dtype=float)
    val = U.dt(t, x) + float(np.dot(U.grad_x(t, x), field(t, x)))
    if not math.isfinite(val):
        raise NonFiniteValue(f"lie derivative not finite at t={t}, x={x!r}")
    return val


def pair_field(field: VectorField) -> VectorField:
    """Doubled system (x, y) -> (f(t,x), f(t,y)) used by uniqueness checks."""
    n = field.dimension

    def ev(t, z):
        return np.concatenate([field(t, z[:n]), field(t, z[n:])])

    return VectorField(2 * n, ev, name=f"paired({field.name})" if field.name else None)
