"""Divergence-form operators ``-div(A grad u) + q u`` and their gauge group.

A boundary-fixing map ``X`` acts by ``S_X u = u o X`` and a positive factor
``kappa`` by ``S_kappa u = kappa u``.  Conjugation by ``S_kappa S_X`` keeps the
divergence form (and self-adjointness in Lebesgue measure) exactly when
``kappa = |det dX|^{1/2}``; the new coefficients are

    A~ = A(X) (dX^T dX)^{-1},    q~ = q(X) + A~ l.l + div(A~ l),    l = grad log kappa.

The eigenvalues are unchanged, the eigenfunctions become ``kappa phi(X)``,
their fluxes are unchanged where ``det dX = 1`` on the boundary, and
``Lambda~_z = Lambda_z + B kappa``.

On the disc ``X`` is radial, ``X(r, theta) = (r s(r), theta)``, so ``A`` is
carried as radial and tangential principal values in the polar frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import InvalidModelError, ShapeError
from .fields import Field, as_field
from .operator_core import DiscretizedOperator, GeometryModel, assemble, build_operator

SPLINE_DEGREE = 7
MAP_SAMPLES = 1025


class Conductivity:
    """Radial and tangential conductivities; calling it gives the radial (conormal) one.

    On the interval only ``radial`` is used.
    """

    def __init__(self, radial, tangential=None, length: float = 1.0):
        self.radial = as_field(radial, length)
        self.tangential = as_field(tangential, length) if tangential is not None else self.radial
        self.isotropic = tangential is None

    def __call__(self, x):
        return self.radial(x)

    def to_json(self) -> dict:
        out = {"radial": self.radial.to_json()}
        if not self.isotropic:
            out["tangential"] = self.tangential.to_json()
        return out


def as_conductivity(spec, length: float = 1.0) -> Conductivity:
    """Coerce a scalar field, a ``(radial, tangential)`` pair or JSON into a :class:`Conductivity`."""
    if isinstance(spec, Conductivity):
        return spec
    if isinstance(spec, dict) and "radial" in spec:
        return Conductivity(spec["radial"], spec.get("tangential"), length)
    if isinstance(spec, tuple):
        if len(spec) != 2:
            raise InvalidModelError("anisotropic conductivity is a (radial, tangential) pair")
        return Conductivity(spec[0], spec[1], length)
    return Conductivity(spec, None, length)


def build_conductivity_operator(geometry: GeometryModel, conductivity, potential=0.0) -> DiscretizedOperator:
    """Assemble ``-div(A grad u) + q u``, self-adjoint in Lebesgue measure.

    The boundary flux is the inward conormal derivative ``A n . grad u``.
    """
    L = geometry.length
    a = as_conductivity(conductivity, L)
    q = as_field(potential, L)
    grid = np.linspace(0.0, L, 8 * geometry.n + 1)
    for name, f in (("conductivity", a.radial), ("tangential conductivity", a.tangential)):
        vals = f(grid)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise InvalidModelError(f"{name} must be strictly positive")

    if geometry.kind == "interval":
        def coefficients(k):
            one = lambda x: np.ones_like(np.asarray(x, dtype=float))  # noqa: E731
            return (lambda x: a.radial(x), lambda x: 0.0 * one(x), one, lambda x: q(x))
    else:
        def coefficients(k):
            return (lambda r: r * a.radial(r),
                    lambda r: k * k * a.tangential(r) / np.where(r > 0, r, np.inf),
                    lambda r: np.asarray(r, dtype=float),
                    lambda r: r * q(r))
    return assemble(geometry, coefficients, "conductivity", as_field(1.0, L), q, a)


# ------------------------------------------------------------------ maps
@dataclass(frozen=True)
class GaugePair:
    """Boundary-fixing map ``X`` with its gauge factor ``kappa = |det dX|^{1/2}``.

    ``profile`` is a spline of ``X`` on the interval and of the radial
    stretch ``s = X(r) / r`` on the disc; all derivatives are analytic.
    """

    kind: str
    length: float
    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("interval", "disc"):
            raise InvalidModelError(f"unknown map kind {self.kind!r}")
        x = np.linspace(0.0, self.length, 8 * len(self.nodes) + 1)
        X = self.X(x)
        if abs(X[0]) > 1e-10 or abs(X[-1] - self.length) > 1e-10:
            raise InvalidModelError("map must fix the boundary")
        if np.any(self.X(x, 1) <= 0):
            raise InvalidModelError("map is not monotone")
        if self.kind == "disc" and abs(self._spline(0.0, 1)) > 1e-6 * abs(self._spline(0.0)):
            raise InvalidModelError("radial stretch must be even at the centre (s'(0) = 0)")

    @property
    def _spline(self):
        # cached on first use; the dataclass is frozen
        sp = self.__dict__.get("_sp")
        if sp is None:
            sp = make_interp_spline(self.nodes, self.values, k=SPLINE_DEGREE)
            object.__setattr__(self, "_sp", sp)
        return sp

    @classmethod
    def from_map(cls, fun, kind: str = "interval", length: float = 1.0, samples: int = MAP_SAMPLES) -> "GaugePair":
        """Sample ``X`` (interval) or the stretch ``s`` with ``X(r) = r s(r)`` (disc)."""
        nodes = np.linspace(0.0, length, samples)
        return cls(kind, float(length), nodes, np.asarray(fun(nodes), dtype=float))

    @classmethod
    def identity(cls, kind: str = "interval", length: float = 1.0) -> "GaugePair":
        return cls.from_map((lambda x: x) if kind == "interval" else (lambda r: np.ones_like(r)), kind, length,
                            samples=2 * SPLINE_DEGREE + 1)

    # -------------------------------------------------------- derivatives
    def _jets(self, x, order: int) -> list[np.ndarray]:
        """``X`` and its first ``order`` derivatives."""
        x = np.asarray(x, dtype=float)
        if self.kind == "interval":
            return [self._spline(x, j) for j in range(order + 1)]
        s = [self._spline(x, j) for j in range(order + 1)]
        # (r s)^(j) = r s^(j) + j s^(j-1)
        return [x * s[j] + (j * s[j - 1] if j else 0.0) for j in range(order + 1)]

    def X(self, x, nu: int = 0) -> np.ndarray:
        return self._jets(x, nu)[nu]

    def jacobian(self, x) -> np.ndarray:
        """``det dX``: ``X'`` on the interval, ``X' X / r`` on the disc."""
        d = self._jets(x, 1)
        return d[1] if self.kind == "interval" else d[1] * self._spline(x)

    def kappa(self, x) -> np.ndarray:
        return np.sqrt(self.jacobian(x))

    def log_gradient(self, x, derivative: bool = False):
        """``l = (log kappa)'`` and, on request, ``l'``."""
        x = np.asarray(x, dtype=float)
        X0, X1, X2, X3 = self._jets(x, 3)
        l = 0.5 * X2 / X1
        dl = 0.5 * (X3 * X1 - X2 * X2) / (X1 * X1)
        if self.kind == "disc":
            s0, s1, s2 = (self._spline(x, j) for j in range(3))
            l = l + 0.5 * s1 / s0
            dl = dl + 0.5 * (s2 * s0 - s1 * s1) / (s0 * s0)
        return (l, dl) if derivative else l

    def boundary_jacobian(self) -> float:
        return float(self.jacobian(np.array([self.length]))[0]) if self.kind == "disc" else \
            float(max(abs(self.jacobian(np.array([0.0]))[0] - 1), abs(self.jacobian(np.array([self.length]))[0] - 1)) + 1)

    def inverse(self, samples: int | None = None) -> "GaugePair":
        n = samples or len(self.nodes)
        x = np.linspace(0.0, self.length, n)
        y = self.X(x)
        if self.kind == "interval":
            return GaugePair("interval", self.length, y, x)
        # X^{-1}(y) = y / s(r) at y = r s(r)
        return GaugePair("disc", self.length, y, 1.0 / self._spline(x))

    def to_json(self, samples: int = 65) -> dict:
        x = np.linspace(0.0, self.length, samples)
        return {"kind": self.kind, "length": self.length,
                "nodes": self.nodes.tolist(), "values": self.values.tolist(),
                "check": {"x": x.tolist(), "X": self.X(x).tolist(), "dX": self.X(x, 1).tolist(),
                          "kappa": self.kappa(x).tolist(),
                          "dkappa": (self.kappa(x) * self.log_gradient(x)).tolist()}}

    @classmethod
    def from_json(cls, data: dict) -> "GaugePair":
        try:
            return cls(data["kind"], float(data["length"]), np.asarray(data["nodes"], dtype=float),
                       np.asarray(data["values"], dtype=float))
        except KeyError as exc:
            raise ShapeError(f"malformed gauge pair: missing {exc}") from exc


def _derivative(f: Field, x):
    return f.derivative(x) if f.kind != "callable" else np.gradient(f(x), x, edge_order=2)


def _sampled(values_at, length: float, n: int) -> Field:
    return as_field(values_at(np.linspace(0.0, length, n)), length)


def apply_gauge(op: DiscretizedOperator, pair: GaugePair, samples: int = 4097) -> DiscretizedOperator:
    """The operator ``S_kappa S_X a S_X^{-1} S_kappa^{-1}`` on the same geometry.

    Conductivity-form input gets the full gauge action.  A Schrödinger-form
    operator only admits coordinate changes, so ``X`` acts alone (interval
    only: a radial map does not keep a conformal metric on the disc).
    The transformed coefficients are stored as spline samples.
    """
    geo = op.geometry
    if pair.kind != geo.kind or abs(pair.length - geo.length) > 1e-12:
        raise InvalidModelError("gauge pair lives on a different domain")
    L = geo.length
    if op.form == "schrodinger":
        if geo.kind != "interval":
            raise InvalidModelError("coordinate changes of a conformal disc metric are not conformal")
        c, q = op.metric, op.potential
        metric = _sampled(lambda x: c(pair.X(x)) / pair.X(x, 1) ** 2, L, samples)
        return build_operator(geo, metric, _sampled(lambda x: q(pair.X(x)), L, samples))
    a = as_conductivity(op.conductivity, L)
    q = op.potential

    def radial(x):
        return a.radial(pair.X(x)) / pair.X(x, 1) ** 2

    def tangential(x):
        return a.tangential(pair.X(x)) / pair._spline(x) ** 2

    def potential(x):
        X, X1, X2 = pair._jets(x, 2)
        l, dl = pair.log_gradient(x, derivative=True)
        A = a.radial(X) / X1 ** 2
        dA = _derivative(a.radial, X) / X1 - 2.0 * a.radial(X) * X2 / X1 ** 3
        out = q(X) + A * l * l + dA * l + A * dl
        if geo.kind == "disc":
            # (1/r)(r A l)' adds A l / r, whose limit at the centre is A l'
            safe = np.where(x > 0, x, 1.0)
            out = out + np.where(x > 0, A * l / safe, A * dl)
        return out

    tang = None if (geo.kind == "interval") else _sampled(tangential, L, samples)
    cond = Conductivity(_sampled(radial, L, samples), tang, L)
    return build_conductivity_operator(geo, cond, _sampled(potential, L, samples))


def boundary_shift(op: DiscretizedOperator, pair: GaugePair) -> np.ndarray:
    """``(B kappa)`` on the boundary, per boundary slot, from ``kappa`` directly."""
    L = op.geometry.length
    a = as_conductivity(op.conductivity, L) if op.form == "conductivity" else None
    if a is None:
        return np.zeros(op.n_boundary)
    ends = np.array([0.0, L])
    dk = pair.kappa(ends) * pair.log_gradient(ends)
    if op.geometry.kind == "interval":
        # inward normal: +x at 0, -x at L
        return np.array([a(ends[:1])[0] * dk[0], -a(ends[1:])[0] * dk[1]])
    return np.full(op.n_boundary, -a(ends[1:])[0] * dk[1])


# --------------------------------------------------------- equivalence
@dataclass(frozen=True)
class GaugeEquivalence:
    """Verdict of ``Lambda2_z = Lambda1_z + diag(sigma)`` over a list of ``z``.

    ``residual`` is the largest entry of ``Lambda2 - Lambda1 - diag(sigma)``;
    ``z_spread`` is the part of it on the diagonal (z-dependence of sigma).
    """

    sigma: np.ndarray
    residual: float
    z_spread: float
    equivalent: bool
    zs: tuple

    def __iter__(self):
        yield self.sigma
        yield self.residual

    def to_json(self) -> dict:
        return {"sigma": np.real(self.sigma).tolist(), "residual": self.residual, "z_spread": self.z_spread,
                "equivalent": self.equivalent, "z": [[float(np.real(z)), float(np.imag(z))] for z in self.zs]}


def dtn_gauge_residual(dtn1, dtn2, zs, tol: float = 1e-6) -> GaugeEquivalence:
    """Least-squares ``sigma`` with ``Lambda2_z - Lambda1_z ~ diag(sigma)`` for all ``z``."""
    zs = tuple(zs)
    if not zs:
        raise ValueError("need at least one z")
    diffs = []
    for z in zs:
        m1, m2 = (np.asarray(getattr(s(z), "matrix", s(z))) for s in (dtn1, dtn2))
        if m1.shape != m2.shape:
            raise ShapeError("samplers live on different boundaries")
        diffs.append(m2 - m1)
    D = np.array(diffs)
    diag = np.diagonal(D, axis1=1, axis2=2)
    sigma = diag.mean(axis=0)
    if np.all(np.abs(sigma.imag) < tol):
        sigma = sigma.real
    rest = D - sigma * np.eye(D.shape[1])
    residual = float(np.abs(rest).max())
    spread = float(np.abs(np.diagonal(rest, axis1=1, axis2=2)).max())
    return GaugeEquivalence(sigma, residual, spread, residual < tol, zs)
