"""Boundary sources, time stepping for the wave, heat and Schrödinger problems,
and their response operators, computed directly or synthesized from ``Lambda_z``.

All three problems share one semi-discrete interior system per block,

    W u_I'' = -(K_II u_I + K_IB g(t))              wave
    W u_I'  = -(K_II u_I + K_IB g(t))              heat
    W u_I'  =  i (K_II u_I + K_IB g(t))            Schrödinger

with ``W`` the lumped interior mass and ``g`` the boundary node values.  The
response is the Green-consistent flux with ``z`` replaced by the matching
time derivative (``-d^2/dt^2``, ``-d/dt`` and ``-i d/dt``), the same
convention as :func:`ipeq.operator_core.boundary_flux`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.interpolate import CubicSpline
from scipy.sparse import csc_matrix, diags
from scipy.sparse.linalg import splu
from scipy.special import gamma

from .errors import HorizonError, PathError, ShapeError, StabilityError
from .operator_core import DiscretizedOperator, eigenvalues

KINDS = ("wave", "heat", "schrodinger")


class CompatibilityWarning(UserWarning):
    """Source does not vanish to second order at ``t = 0``."""


class AccuracyWarning(UserWarning):
    """A quadrature or truncation target was not met."""


def _kind(kind: str) -> str:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    return kind


# ---------------------------------------------------------------- profiles
class Profile:
    """Scalar time profile with derivatives and a Laplace transform."""

    start: float
    end: float

    def value(self, t, order: int = 0) -> np.ndarray:
        raise NotImplementedError

    def laplace(self, omega, offset: float = 0.0) -> np.ndarray:
        """``int e^{-omega (t - offset)} chi(t) dt`` for complex ``omega``.

        ``offset`` keeps ``e^{-omega t}`` in range for large negative ``omega``.
        """
        raise NotImplementedError

    def fourier(self, k) -> np.ndarray:
        """``int e^{i k t} chi(t) dt``."""
        return self.laplace(-1j * np.asarray(k, dtype=complex))

    @property
    def is_real(self) -> bool:
        return True

    def to_json(self) -> dict:
        raise NotImplementedError


def _gl_laplace(fun, a: float, b: float, omega: np.ndarray, n: int, offset: float = 0.0) -> np.ndarray:
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (b - a) * x + 0.5 * (a + b)
    vals = fun(t) * (0.5 * (b - a) * w)
    return np.exp(-np.multiply.outer(omega, t - offset)) @ vals


@dataclass(frozen=True)
class PolynomialBump(Profile):
    """``amplitude * ((t - start)(end - t) / (w/2)^2)^power`` on ``[start, end]``.

    With ``power >= 3`` the profile and its first two derivatives vanish at
    both ends, so a bump starting at ``t >= 0`` is a compatible source.
    """

    start: float = 0.0
    end: float = 1.0
    power: int = 6
    amplitude: complex = 1.0

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError("bump needs end > start")
        if self.power < 1:
            raise ValueError("bump power must be positive")

    @property
    def _poly(self) -> np.ndarray:
        # coefficients in (t - start)
        w = self.end - self.start
        base = npoly.polymul([0.0, 1.0], [w, -1.0]) / (0.5 * w) ** 2
        return npoly.polypow(base, self.power) * self.amplitude

    @property
    def is_real(self) -> bool:
        return np.imag(self.amplitude) == 0

    def value(self, t, order: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        c = npoly.polyder(self._poly, order) if order else self._poly
        out = npoly.polyval(t - self.start, c)
        inside = (t >= self.start) & (t <= self.end)
        return np.where(inside, out, 0.0)

    def laplace(self, omega, offset: float = 0.0) -> np.ndarray:
        om = np.atleast_1d(np.asarray(omega, dtype=complex))
        a, b, w = self.start, self.end, self.end - self.start
        out = np.empty(om.shape, dtype=complex)
        small = np.abs(om) * w < 40.0
        if np.any(small):
            n = 40 + self.power + 4
            out[small] = _gl_laplace(lambda t: self.value(t), a, b, om[small], n, offset)
        big = ~small
        if np.any(big):
            # repeated integration by parts terminates for a polynomial
            o = om[big]
            c = self._poly
            acc_a = np.zeros(o.shape, dtype=complex)
            acc_b = np.zeros(o.shape, dtype=complex)
            ok = 0
            while len(c) and np.any(c != 0):
                acc_a += npoly.polyval(0.0, c) / o ** (ok + 1)
                acc_b += npoly.polyval(w, c) / o ** (ok + 1)
                c = npoly.polyder(c)
                ok += 1
            out[big] = np.exp(-o * (a - offset)) * acc_a - np.exp(-o * (b - offset)) * acc_b
        return out.reshape(np.shape(omega)) if np.ndim(omega) else out[0]

    def to_json(self) -> dict:
        amp = complex(self.amplitude)
        return {"type": "bump", "start": self.start, "end": self.end, "power": self.power,
                "amplitude": [amp.real, amp.imag]}


@dataclass(frozen=True)
class Modulated(Profile):
    """``e^{i frequency t} * base(t)``."""

    base: Profile
    frequency: float

    @property
    def start(self):
        return self.base.start

    @property
    def end(self):
        return self.base.end

    @property
    def is_real(self) -> bool:
        return self.frequency == 0 and self.base.is_real

    def value(self, t, order: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        nu = 1j * self.frequency
        acc = sum(math.comb(order, j) * nu ** (order - j) * self.base.value(t, j) for j in range(order + 1))
        return np.exp(nu * t) * acc

    def laplace(self, omega, offset: float = 0.0) -> np.ndarray:
        nu = 1j * self.frequency
        return np.exp(nu * offset) * self.base.laplace(np.asarray(omega, dtype=complex) - nu, offset)

    def to_json(self) -> dict:
        return {"type": "modulated", "frequency": self.frequency, "base": self.base.to_json()}


@dataclass(frozen=True)
class SmoothStep(Profile):
    """Rises from 0 to ``amplitude`` on ``[start, rise_end]`` (integrated bump), then stays.

    Not compactly supported: ``end`` is infinite and the Laplace transform
    exists for ``Re omega > 0``.
    """

    start: float = 0.0
    rise_end: float = 1.0
    power: int = 4
    amplitude: float = 1.0

    @property
    def end(self) -> float:
        return math.inf

    @property
    def _bump(self) -> PolynomialBump:
        b = PolynomialBump(self.start, self.rise_end, self.power)
        return PolynomialBump(self.start, self.rise_end, self.power, self.amplitude / self._area(b))

    @staticmethod
    def _area(b: PolynomialBump) -> float:
        c = npoly.polyint(b._poly)
        return float(npoly.polyval(b.end - b.start, c).real)

    def value(self, t, order: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if order > 0:
            return self._bump.value(t, order - 1)
        c = npoly.polyint(self._bump._poly)
        ramp = npoly.polyval(np.clip(t, self.start, self.rise_end) - self.start, c).real
        return np.where(t < self.start, 0.0, ramp)

    def laplace(self, omega, offset: float = 0.0) -> np.ndarray:
        # integrate by parts once: chi~ = bump~ / omega
        om = np.asarray(omega, dtype=complex)
        return self._bump.laplace(om, offset) / om

    def to_json(self) -> dict:
        return {"type": "step", "start": self.start, "rise_end": self.rise_end, "power": self.power,
                "amplitude": self.amplitude}


@dataclass(frozen=True)
class _Part(Profile):
    """Real or imaginary part of a complex profile."""

    base: Profile
    imag: bool = False

    @property
    def start(self):
        return self.base.start

    @property
    def end(self):
        return self.base.end

    def value(self, t, order: int = 0) -> np.ndarray:
        v = self.base.value(t, order)
        return np.imag(v) if self.imag else np.real(v)

    def laplace(self, omega, offset: float = 0.0) -> np.ndarray:
        om = np.asarray(omega, dtype=complex)
        a = self.base.laplace(om, offset)
        b = np.conj(self.base.laplace(np.conj(om), offset))
        return (a - b) / 2j if self.imag else (a + b) / 2

    def to_json(self) -> dict:
        return {"type": "part", "imag": self.imag, "base": self.base.to_json()}


class SplineProfile(Profile):
    """Sampled profile interpolated by a clamped cubic spline, zero outside the samples."""

    def __init__(self, times, values):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values)
        if t.ndim != 1 or len(t) < 4 or np.any(np.diff(t) <= 0):
            raise ShapeError("need at least four increasing sample times")
        self.times = t
        self.values = v
        self.start, self.end = float(t[0]), float(t[-1])
        self._re = CubicSpline(t, np.real(v), bc_type="clamped")
        self._im = CubicSpline(t, np.imag(v), bc_type="clamped") if np.iscomplexobj(v) else None

    @property
    def is_real(self) -> bool:
        return self._im is None

    def value(self, t, order: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = self._re(t, order)
        if self._im is not None:
            out = out + 1j * self._im(t, order)
        return np.where((t >= self.start) & (t <= self.end), out, 0.0)

    def laplace(self, omega, offset: float = 0.0) -> np.ndarray:
        om = np.atleast_1d(np.asarray(omega, dtype=complex))
        out = np.zeros(om.shape, dtype=complex)
        # cubic pieces: Gauss rule resolves the exponential per interval
        for a, b in zip(self.times[:-1], self.times[1:]):
            n = int(min(200, 8 + np.ceil(np.abs(om).max() * (b - a))))
            out += _gl_laplace(lambda t: self.value(t), a, b, om, n, offset)
        return out.reshape(np.shape(omega)) if np.ndim(omega) else out[0]

    def to_json(self) -> dict:
        v = np.asarray(self.values)
        return {"type": "spline", "times": self.times.tolist(), "values_re": np.real(v).tolist(),
                "values_im": np.imag(v).tolist()}


@dataclass(frozen=True)
class Monomial(Profile):
    """``amplitude * t^power`` for ``t >= 0``; with ``power > 2`` a compatible source."""

    power: float = 3.0
    amplitude: float = 1.0
    start: float = 0.0
    end: float = math.inf

    def value(self, t, order: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        p = self.power
        coef = self.amplitude * math.prod(p - j for j in range(order))
        pos = np.maximum(t, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = coef * pos ** (p - order) if coef else np.zeros_like(pos)
        return np.where(t >= 0, out, 0.0)

    def laplace(self, omega, offset: float = 0.0) -> np.ndarray:
        om = np.asarray(omega, dtype=complex)
        if np.any(om.real <= 0):
            raise PathError("monomial transforms need Re omega > 0")
        return self.amplitude * gamma(self.power + 1) * np.exp(om * offset) / om ** (self.power + 1)

    def to_json(self) -> dict:
        return {"type": "monomial", "power": self.power, "amplitude": self.amplitude}


class Integrated(Profile):
    """``int_{-inf}^t base``: derivatives come from ``base``, values from Gauss-Legendre panels."""

    NODES = 16

    def __init__(self, base: Profile):
        self.base = base
        self.start = base.start
        self.end = math.inf

    @property
    def is_real(self) -> bool:
        return self.base.is_real

    def value(self, t, order: int = 0) -> np.ndarray:
        if order:
            return self.base.value(t, order - 1)
        t = np.asarray(t, dtype=float)
        top = min(self.base.end, t.max(initial=self.start)) if t.size else self.start
        # panel breaks at the requested times and at any spline knots
        cuts = [np.clip(t.ravel(), self.start, top), [self.start, top]]
        knots = getattr(self.base, "times", None)
        if knots is not None:
            cuts.append(knots[(knots > self.start) & (knots < top)])
        breaks = np.unique(np.concatenate(cuts))
        x, w = np.polynomial.legendre.leggauss(self.NODES)
        a, b = breaks[:-1], breaks[1:]
        nodes = 0.5 * np.multiply.outer(b - a, x) + 0.5 * (a + b)[:, None]
        panels = (self.base.value(nodes) * w).sum(axis=1) * 0.5 * (b - a)
        cum = np.concatenate([[0.0], np.cumsum(panels)])
        out = cum[np.searchsorted(breaks, np.clip(t, self.start, top))]
        return np.where(t >= self.start, out, 0.0)

    def laplace(self, omega, offset: float = 0.0) -> np.ndarray:
        om = np.asarray(omega, dtype=complex)
        return self.base.laplace(om, offset) / om

    def to_json(self) -> dict:
        return {"type": "integrated", "base": self.base.to_json()}


def profile_from_json(data: dict) -> Profile:
    kind = data.get("type")
    if kind == "bump":
        amp = data.get("amplitude", [1.0, 0.0])
        return PolynomialBump(data["start"], data["end"], int(data.get("power", 6)), complex(amp[0], amp[1]))
    if kind == "modulated":
        return Modulated(profile_from_json(data["base"]), float(data["frequency"]))
    if kind == "part":
        return _Part(profile_from_json(data["base"]), bool(data["imag"]))
    if kind == "step":
        return SmoothStep(data["start"], data["rise_end"], int(data.get("power", 4)), float(data.get("amplitude", 1.0)))
    if kind == "spline":
        v = np.asarray(data["values_re"]) + 1j * np.asarray(data.get("values_im", 0.0))
        return SplineProfile(data["times"], v if np.any(np.imag(v)) else v.real)
    if kind == "monomial":
        return Monomial(float(data["power"]), float(data.get("amplitude", 1.0)))
    if kind == "integrated":
        return Integrated(profile_from_json(data["base"]))
    raise ShapeError(f"unknown profile type {kind!r}")


# ----------------------------------------------------------------- sources
@dataclass(frozen=True)
class SourceTerm:
    F: np.ndarray
    profile: Profile
    delay: float = 0.0


@dataclass(frozen=True)
class BoundarySource:
    """``f(x, t) = sum_j F_j(x) chi_j(t - delay_j)`` in the boundary basis.

    A general boundary-by-time grid is represented with one sampled profile
    per boundary slot (see :meth:`from_grid`).
    """

    terms: tuple
    n_boundary: int

    def __post_init__(self):
        for term in self.terms:
            if np.shape(term.F) != (self.n_boundary,):
                raise ShapeError("boundary profile length mismatch")
            if term.delay < 0:
                raise ValueError("delays must be nonnegative")

    @classmethod
    def separable(cls, F, profile: Profile, delay: float = 0.0) -> "BoundarySource":
        F = np.asarray(F)
        F = F.astype(complex) if np.iscomplexobj(F) else F.astype(float)
        return cls((SourceTerm(F, profile, float(delay)),), len(F))

    @classmethod
    def zero(cls, n_boundary: int) -> "BoundarySource":
        return cls((), n_boundary)

    @classmethod
    def from_grid(cls, times, values) -> "BoundarySource":
        values = np.asarray(values)
        nb = values.shape[1]
        terms = []
        for j in range(nb):
            if np.any(values[:, j]):
                e = np.zeros(nb)
                e[j] = 1.0
                terms.append(SourceTerm(e, SplineProfile(times, values[:, j])))
        return cls(tuple(terms), nb)

    # ---------------------------------------------------------- algebra
    def __add__(self, other: "BoundarySource") -> "BoundarySource":
        if other.n_boundary != self.n_boundary:
            raise ShapeError("sources live on different boundaries")
        return BoundarySource(self.terms + other.terms, self.n_boundary)

    def __mul__(self, c) -> "BoundarySource":
        c = complex(c)
        scale = c.real if c.imag == 0 else c
        return BoundarySource(tuple(SourceTerm(t.F * scale, t.profile, t.delay) for t in self.terms),
                              self.n_boundary)

    __rmul__ = __mul__

    def integrated(self) -> "BoundarySource":
        """``int_0^t f``: each profile replaced by its running integral."""
        return BoundarySource(tuple(SourceTerm(t.F, Integrated(t.profile), t.delay) for t in self.terms),
                              self.n_boundary)

    def delayed(self, tau: float) -> "BoundarySource":
        """``Y_tau f``: the source shifted later by ``tau``."""
        return BoundarySource(tuple(SourceTerm(t.F, t.profile, t.delay + tau) for t in self.terms),
                              self.n_boundary)

    def modulated(self, frequency: float) -> "BoundarySource":
        """``e^{i frequency t} f``."""
        out = []
        for t in self.terms:
            # e^{i nu t} chi(t - d) = e^{i nu d} (e^{i nu s} chi)(s), s = t - d
            out.append(SourceTerm(t.F * np.exp(1j * frequency * t.delay), Modulated(t.profile, frequency),
                                  t.delay))
        return BoundarySource(tuple(out), self.n_boundary)

    def _split(self):
        re, im = [], []
        for t in self.terms:
            Fr, Fi = np.real(t.F).astype(float), np.imag(t.F).astype(float)
            if t.profile.is_real:
                pr, pi = t.profile, None
            else:
                pr, pi = _Part(t.profile), _Part(t.profile, True)
            # (Fr + i Fi)(pr + i pi) = Fr pr - Fi pi + i (Fi pr + Fr pi)
            for F, p, bucket in ((Fr, pr, re), (Fi, pr, im), (-Fi, pi, re), (Fr, pi, im)):
                if p is not None and np.any(F):
                    bucket.append(SourceTerm(F, p, t.delay))
        return (BoundarySource(tuple(re), self.n_boundary), BoundarySource(tuple(im), self.n_boundary))

    def real_part(self) -> "BoundarySource":
        return self._split()[0]

    def imag_part(self) -> "BoundarySource":
        return self._split()[1]

    # --------------------------------------------------------- evaluation
    @property
    def is_real(self) -> bool:
        return all(np.isrealobj(t.F) and t.profile.is_real for t in self.terms)

    @property
    def support(self) -> tuple[float, float]:
        if not self.terms:
            return (0.0, 0.0)
        return (min(t.profile.start + t.delay for t in self.terms),
                max(t.profile.end + t.delay for t in self.terms))

    @property
    def support_end(self) -> float:
        return self.support[1]

    def __call__(self, t, order: int = 0) -> np.ndarray:
        """Boundary values (or time derivatives) at times ``t``: shape ``t.shape + (n_boundary,)``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.n_boundary,), dtype=complex if not self.is_real else float)
        for term in self.terms:
            out = out + np.multiply.outer(term.profile.value(t - term.delay, order), term.F)
        return out

    def laplace(self, omega, offset: float = 0.0) -> np.ndarray:
        """``int e^{-omega (t - offset)} f(t) dt``, shape ``omega.shape + (n_boundary,)``."""
        om = np.asarray(omega, dtype=complex)
        out = np.zeros(om.shape + (self.n_boundary,), dtype=complex)
        for term in self.terms:
            out += np.multiply.outer(term.profile.laplace(om, offset - term.delay), term.F)
        return out

    def fourier(self, k) -> np.ndarray:
        """``f^(k) = int e^{ikt} f(t) dt``."""
        return self.laplace(-1j * np.asarray(k, dtype=complex))

    def check_compatibility(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, max((np.abs(t.F).max() for t in self.terms), default=1.0))
        ok = all(np.abs(self(0.0, j)).max(initial=0.0) <= tol * scale for j in range(3))
        if not ok:
            warnings.warn("source does not vanish to second order at t=0", CompatibilityWarning, stacklevel=3)
        return ok

    def to_json(self) -> dict:
        return {"n_boundary": self.n_boundary,
                "terms": [{"F_re": np.real(t.F).tolist(), "F_im": np.imag(t.F).tolist(),
                           "delay": t.delay, "profile": t.profile.to_json()} for t in self.terms]}

    @classmethod
    def from_json(cls, data: dict) -> "BoundarySource":
        terms = []
        for t in data["terms"]:
            F = np.asarray(t["F_re"], dtype=float) + 1j * np.asarray(t.get("F_im", 0.0))
            F = F.real if not np.any(F.imag) else F
            terms.append(SourceTerm(F, profile_from_json(t["profile"]), float(t.get("delay", 0.0))))
        return cls(tuple(terms), int(data["n_boundary"]))


# ---------------------------------------------------------------- stepping
@dataclass
class Trajectory:
    """Node values ``states[n]`` at ``times[n]`` (velocities for the wave kind)."""

    kind: str
    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray | None = None


@dataclass(frozen=True)
class ResponseKernel:
    """Samples ``(R f)(t_n)`` on ``t_n = n dt``, shape ``(len(times), n_boundary)``."""

    kind: str
    dt: float
    T: float
    samples: np.ndarray
    provenance: str
    boundary: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.shape[0])

    def to_json(self) -> dict:
        s = np.asarray(self.samples)
        return {"kind": self.kind, "dt": self.dt, "t_max": self.T, "provenance": self.provenance,
                "boundary": self.boundary, "samples_re": np.real(s).tolist(),
                "samples_im": np.imag(s).tolist(), "diagnostics": self.diagnostics}

    @classmethod
    def from_json(cls, data: dict) -> "ResponseKernel":
        s = np.asarray(data["samples_re"], dtype=float)
        im = np.asarray(data.get("samples_im", np.zeros_like(s)), dtype=float)
        samples = s + 1j * im if np.any(im) else s
        return cls(data["kind"], float(data["dt"]), float(data["t_max"]), samples,
                   data.get("provenance", "direct"), data.get("boundary", {}), data.get("diagnostics", {}))


def stable_dt(op: DiscretizedOperator) -> float:
    """Largest leapfrog step for the wave scheme: ``2 / sqrt(lambda_max)``."""
    return 2.0 / math.sqrt(float(eigenvalues(op).max()))


def _grid(T: float, dt: float) -> np.ndarray:
    if not (dt > 0 and T > 0):
        raise ValueError("T and dt must be positive")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * T:
        raise ValueError("T must be a multiple of dt")
    return dt * np.arange(n + 1)


class _BlockStepper:
    def __init__(self, b, kind, dt):
        self.b = b
        ii = b.interior
        self.W = b.mass[ii]
        self.K = csc_matrix(b.sub("I", "I"))
        self.C = b.sub("I", "B")
        self.kbi = b.sub("B", "I")
        self.kbb = b.sub("B", "B")
        self.mbb = b.mass[b.boundary]
        self.kind = kind
        self.dt = dt
        W = diags(self.W)
        if kind == "heat":
            self.lhs = splu(csc_matrix(W + 0.5 * dt * self.K))
            self.rhs = csc_matrix(W - 0.5 * dt * self.K)
        elif kind == "schrodinger":
            self.lhs = splu(csc_matrix(W - 0.5j * dt * self.K, dtype=complex))
            self.rhs = csc_matrix(W + 0.5j * dt * self.K, dtype=complex)

    def run(self, g, gd, gdd, keep_states):
        """Step with boundary node data ``g`` (and derivatives) sampled on the grid."""
        dt, K, C, W = self.dt, self.K, self.C, self.W
        n = g.shape[0]
        dtype = complex if (self.kind == "schrodinger" or np.iscomplexobj(g)) else float
        ni = len(W)
        u = np.zeros((n, ni), dtype=dtype) if keep_states else None
        flux = np.empty((n, g.shape[1]), dtype=dtype)
        cur = np.zeros(ni, dtype=dtype)
        if self.kind == "wave":
            prev = cur
            acc0 = -(C @ g[0]) / W
            jerk0 = -(C @ gd[0]) / W
            nxt = 0.5 * dt * dt * acc0 + dt ** 3 / 6.0 * jerk0
            for j in range(n):
                if keep_states:
                    u[j] = cur
                flux[j] = -self.mbb * gdd[j] - self.kbb @ g[j] - self.kbi @ cur
                if j + 1 < n:
                    if j > 0:
                        nxt = 2 * cur - prev + dt * dt * (-(K @ cur + C @ g[j]) / W)
                    prev, cur = cur, nxt
        else:
            lead = -1.0 if self.kind == "heat" else -1j
            forcing = -0.5 * dt if self.kind == "heat" else 0.5j * dt
            for j in range(n):
                if keep_states:
                    u[j] = cur
                flux[j] = lead * self.mbb * gd[j] - self.kbb @ g[j] - self.kbi @ cur
                if j + 1 < n:
                    cur = self.lhs.solve(self.rhs @ cur + forcing * (C @ (g[j] + g[j + 1])))
        return u, flux


def _check_step(op, kind, dt):
    if kind == "wave":
        lim = stable_dt(op)
        if dt >= lim:
            raise StabilityError(f"dt={dt:g} exceeds the leapfrog bound {lim:.4g}")


def _simulate(op: DiscretizedOperator, kind: str, f: BoundarySource, T: float, dt: float, keep_states: bool):
    kind = _kind(kind)
    if f.n_boundary != op.n_boundary:
        raise ShapeError(f"source has {f.n_boundary} boundary slots, operator {op.n_boundary}")
    _check_step(op, kind, dt)
    f.check_compatibility()
    times = _grid(T, dt)
    F0, F1 = f(times), f(times, 1)
    F2 = f(times, 2) if kind == "wave" else None
    dtype = complex if (kind == "schrodinger" or not f.is_real) else float
    states = np.zeros((len(times), op.n_nodes), dtype=dtype) if keep_states else None
    response = np.zeros((len(times), op.n_boundary), dtype=dtype)
    for b, sl in zip(op.blocks, op.block_slices):
        sc = b.scale
        g = F0[:, b.columns] * sc
        if not np.any(g):
            continue
        stepper = _BlockStepper(b, kind, dt)
        gd = F1[:, b.columns] * sc
        gdd = F2[:, b.columns] * sc if F2 is not None else None
        u, flux = stepper.run(g, gd, gdd, keep_states)
        if keep_states:
            states[:, sl.start + b.interior] = u
            states[:, sl.start + b.boundary] = g
        for j, col in enumerate(b.columns):
            response[:, col] += sc[j] * flux[:, j]
    return times, states, response


def evolve(op: DiscretizedOperator, kind: str, f: BoundarySource, T: float, dt: float) -> Trajectory:
    """Solve the discrete initial-boundary value problem with zero initial data.

    Wave: leapfrog (raises :class:`StabilityError` above :func:`stable_dt`);
    heat: Crank-Nicolson; Schrödinger: Crank-Nicolson midpoint, which is
    unitary in the lumped mass norm once the source is off.
    """
    times, states, _ = _simulate(op, kind, f, T, dt, keep_states=True)
    vel = None
    if kind == "wave":
        vel = np.gradient(states, dt, axis=0, edge_order=2)
    return Trajectory(kind, times, states, vel)


def response_direct(op: DiscretizedOperator, kind: str, f: BoundarySource, T: float, dt: float) -> ResponseKernel:
    """``R f`` sampled on ``[0, T]`` from the time-stepped solution."""
    _, _, resp = _simulate(op, kind, f, T, dt, keep_states=False)
    if kind != "schrodinger" and f.is_real:
        resp = np.real(resp)
    return ResponseKernel(kind, dt, T, resp, "direct", op.geometry.boundary_descriptor())


# -------------------------------------------------------- contour synthesis
def _spectral_map(kind: str, omega):
    if kind == "wave":
        return -omega * omega
    if kind == "heat":
        return -omega
    return -1j * omega


def _default_mu(kind: str, lam1: float) -> float:
    mu0 = max(0.0, -lam1)
    return math.sqrt(mu0) + 1.0 if kind == "wave" else (mu0 + 1.0 if kind == "heat" else 1.0)


def response_from_dtn(sampler, kind: str, f: BoundarySource, T: float, dt: float, mu: float | None = None,
                      lowest_eigenvalue: float | None = None, tail_tol: float = 1e-10,
                      alias_tol: float = 1e-12, max_points: int = 200_000) -> ResponseKernel:
    """``R f`` by inverse Laplace transform along ``Re omega = mu``.

    Every kind reduces to ``(1/2pi) int e^{omega t} Lambda_{z(omega)} f~(omega) ds``
    with ``omega = mu + i s`` and ``z = -omega^2``, ``-omega``, ``-i omega``
    for wave, heat and Schrödinger.  The trapezoidal rule with step ``h``
    aliases the causal response with period ``2 pi / h``, damped by
    ``e^{-mu P}``; ``P`` is chosen past the horizon so that damping reaches
    ``alias_tol``.  The range ``|s| <= S`` stops where the integrand falls
    below ``tail_tol`` relative to its peak.
    """
    kind = _kind(kind)
    lam1 = 0.0 if lowest_eigenvalue is None else float(lowest_eigenvalue)
    if mu is None:
        mu = _default_mu(kind, lam1)
    floor = {"wave": math.sqrt(max(0.0, -lam1)), "heat": max(0.0, -lam1), "schrodinger": 0.0}[kind]
    if not mu > floor:
        raise PathError(f"contour abscissa {mu:g} must exceed {floor:g}")
    times = _grid(T, dt)
    P = T + math.log(1.0 / alias_tol) / mu
    h = 2 * math.pi / P

    # tail: scan the source transform on a geometric ladder of |s|
    growth = 2.0 if kind == "wave" else 1.0  # |Lambda| grows like |z|^{1/2}
    def envelope(s):
        om = mu + 1j * s
        vals = np.abs(f.laplace(om)).max(axis=-1) * (1.0 + np.abs(om)) ** (0.5 * growth)
        return vals
    probe = np.concatenate([np.linspace(0, 50, 501), np.geomspace(50, 1e6, 400)])
    env = np.maximum(envelope(probe), envelope(-probe))
    peak = env.max(initial=0.0)
    if peak == 0:
        return ResponseKernel(kind, dt, T, np.zeros((len(times), f.n_boundary)), "synthesized",
                              diagnostics={"mu": mu, "points": 0})
    above = np.nonzero(env > tail_tol * peak)[0]
    S = float(probe[above[-1] + 1]) if above[-1] + 1 < len(probe) else float(probe[-1])
    m = int(math.ceil(S / h))
    if 2 * m + 1 > max_points:
        warnings.warn(f"contour truncated at {max_points} points; source transform decays too slowly",
                      AccuracyWarning, stacklevel=2)
        m = max_points // 2
    s = h * np.arange(-m, m + 1)
    om = mu + 1j * s
    ft = f.laplace(om)  # (ns, nb)
    # Lambda_{conj z} = conj(Lambda_z): wave and heat need only s >= 0
    symmetric = kind != "schrodinger"
    vals = np.empty_like(ft)
    for i, o in enumerate(om):
        if symmetric and s[i] < 0:
            continue
        lam = np.asarray(getattr(sampler(_spectral_map(kind, o)), "matrix", None))
        vals[i] = lam @ ft[i]
        if symmetric and s[i] > 0:
            vals[2 * m - i] = np.conj(lam) @ ft[2 * m - i]
    # R(t) = (h / 2 pi) e^{mu t} sum_s e^{i s t} vals(s)
    resp = np.empty((len(times), f.n_boundary), dtype=complex)
    for lo in range(0, len(times), 256):
        chunk = times[lo:lo + 256]
        resp[lo:lo + 256] = np.exp(1j * np.multiply.outer(chunk, s)) @ vals
    resp *= (h / (2 * math.pi)) * np.exp(mu * times)[:, None]
    if kind != "schrodinger" and f.is_real:
        imag = float(np.abs(resp.imag).max(initial=0.0))
        resp = resp.real
    else:
        imag = None
    tail = float(env[above[-1] + 1] / peak) if above[-1] + 1 < len(env) else float("nan")
    diag = {"mu": mu, "step": h, "half_width": S, "points": int(2 * m + 1),
            "alias_bound": math.exp(-mu * (P - T)), "truncation_bound": tail, "imag_residual": imag}
    return ResponseKernel(kind, dt, T, resp, "synthesized", diagnostics=diag)


def delay_residual(op: DiscretizedOperator, kind: str, f: BoundarySource, tau: float, T: float, dt: float) -> float:
    """``max |R(Y_tau f) - Y_tau(R f)| / max |R f|`` over the common time window."""
    shift = int(round(tau / dt))
    if abs(shift * dt - tau) > 1e-12 * max(1.0, tau):
        raise ValueError("delay must be a multiple of dt")
    if tau >= T:
        raise HorizonError("delay leaves no overlap with the horizon")
    a = response_direct(op, kind, f.delayed(shift * dt), T, dt).samples
    b = response_direct(op, kind, f, T, dt).samples
    scale = max(float(np.abs(b).max(initial=0.0)), 1e-300)
    return float(np.abs(a[shift:] - b[: len(b) - shift]).max(initial=0.0)) / scale
