"""Smooth steps, plateaus and time bumps used by cutoffs and profiles.

All functions are vectorized and return value and first derivative where
the caller needs both.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import quad


def _h(u):
    u = np.asarray(u, float)
    out = np.zeros_like(u)
    pos = u > 1e-3  # exp(-1/u) is below 1e-400 there
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _dh(u):
    u = np.asarray(u, float)
    out = np.zeros_like(u)
    pos = u > 1e-3  # below this exp(-1/u)/u^2 underflows (0/0)
    out[pos] = np.exp(-1.0 / u[pos]) / u[pos] ** 2
    return out


def smooth_step(u):
    """C-infinity step: 0 for ``u <= 0``, 1 for ``u >= 1``, increasing between."""
    a, b = _h(u), _h(1.0 - np.asarray(u, float))
    return a / (a + b)


def smooth_step_deriv(u):
    u = np.asarray(u, float)
    a, b = _h(u), _h(1.0 - u)
    da, db = _dh(u), -_dh(1.0 - u)
    return (da * (a + b) - a * (da + db)) / (a + b) ** 2


def plateau(r, r_in, r_out):
    """1 for ``r <= r_in``, 0 for ``r >= r_out``; returns (value, d/dr)."""
    w = r_out - r_in
    u = (np.asarray(r, float) - r_in) / w
    return 1.0 - smooth_step(u), -smooth_step_deriv(u) / w


class TimeBump:
    """Smooth ``chi >= 0`` supported in ``[a, b]`` with unit integral."""

    def __init__(self, a: float = 0.5, b: float = 1.0):
        self.a, self.b = a, b
        self._c = 1.0
        self._c = 1.0 / quad(self._raw, a, b, epsabs=0.0, epsrel=1e-12, limit=200)[0]

    def _raw(self, t):
        t = np.asarray(t, float)
        mid, half = 0.5 * (self.a + self.b), 0.5 * (self.b - self.a)
        u = (t - mid) / half
        out = np.zeros_like(t)
        inside = np.abs(u) < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
        return out

    def __call__(self, t):
        return self._c * self._raw(t)
