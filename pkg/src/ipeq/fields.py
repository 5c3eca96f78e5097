"""Scalar coefficient fields (metric, potential, conductivity) on a 1-D domain."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import InvalidModelError


class Field:
    """A real scalar function of one coordinate with derivative access.

    Build with :func:`as_field`; supports constants, vectorized callables,
    and uniformly spaced samples (interpolated by a quintic spline).
    """

    def __init__(self, kind: str, *, value=None, func=None, spline=None, samples=None, length=None):
        self.kind = kind
        self._value = value
        self._func = func
        self._spline = spline
        self.samples = samples
        self.length = length

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full(x.shape, self._value, dtype=float)
        if self.kind == "samples":
            return self._spline(x)
        return np.asarray(self._func(x), dtype=float) * np.ones_like(x)

    def derivative(self, x, order: int = 1):
        x = np.asarray(x, dtype=float)
        if order == 0:
            return self(x)
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "samples":
            return self._spline(x, nu=order)
        return np.array([self.taylor(xi, order, span=0.02)[order] * math.factorial(order)
                         for xi in np.atleast_1d(x)]).reshape(x.shape)

    def taylor(self, x0: float, order: int, *, direction: float = 0.0, span: float = 0.02) -> np.ndarray:
        """Taylor coefficients ``c_j`` with ``f(x0 + s) ~ sum c_j s^j``.

        ``direction`` restricts sampling to one side of ``x0`` (sign of the
        offset) so jets can be taken at domain endpoints.
        """
        if self.kind == "constant":
            out = np.zeros(order + 1)
            out[0] = self._value
            return out
        if self.kind == "samples":
            return np.array([self._spline(x0, nu=j) / math.factorial(j) for j in range(order + 1)])
        deg = max(order + 4, 8)
        nodes = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        if direction > 0:
            s = 0.5 * span * (nodes + 1.0)
        elif direction < 0:
            s = -0.5 * span * (nodes + 1.0)
        else:
            s = 0.5 * span * nodes
        coef = np.polynomial.polynomial.polyfit(s, self(x0 + s), deg)
        return coef[: order + 1]

    def to_json(self):
        if self.kind == "constant":
            return {"type": "constant", "values": [self._value]}
        if self.kind == "samples":
            return {"type": "samples", "values": [float(v) for v in self.samples]}
        return {"type": "callable"}


def as_field(spec, length: float = 1.0) -> Field:
    """Coerce ``spec`` into a :class:`Field` on ``[0, length]``.

    ``spec`` may be a number, a callable, a 1-D array of samples on a
    uniform grid over the domain, an existing Field, or the JSON form
    ``{"type": "constant"|"samples", "values": [...]}``.
    """
    if isinstance(spec, Field):
        return spec
    if isinstance(spec, dict):
        kind = spec.get("type", "constant")
        values = spec.get("values", [])
        if kind == "constant":
            if len(values) != 1:
                raise InvalidModelError("constant field needs exactly one value")
            return as_field(float(values[0]), length)
        if kind == "samples":
            return as_field(np.asarray(values, dtype=float), length)
        raise InvalidModelError(f"unknown field type {kind!r}")
    if callable(spec):
        return Field("callable", func=spec, length=length)
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        if not math.isfinite(float(arr)):
            raise InvalidModelError("field value must be finite")
        return Field("constant", value=float(arr), length=length)
    if arr.ndim != 1 or len(arr) < 2:
        raise InvalidModelError("field samples must be a 1-D array with at least 2 values")
    grid = np.linspace(0.0, length, len(arr))
    k = min(5, len(arr) - 1)
    if k % 2 == 0:
        k -= 1
    spline = make_interp_spline(grid, arr, k=max(k, 1))
    return Field("samples", spline=spline, samples=arr, length=length)


Coefficient = Callable[[np.ndarray], np.ndarray]
