"""Wave boundary forms on a finite horizon ``[0, T]``.

``B^T[f, h] = int int (f R h - h R f)`` is antisymmetric and
``Pi^T[f, h] = -1/2 int int (R f dh/dt + df/dt R h)`` is the energy put into
the domain by time ``T`` (its diagonal is ``E^w(u^f, T)``; the minus sign
comes from the inward flux ``B``).  :func:`bt_from_flux` rebuilds ``B^T``
from ``Pi^T`` alone.  Integration by parts gives, for the running integral
``I`` of a source,

    B^T[f, h] =  2 Pi^T[I h, f]        if f(T) = 0,
    B^T[f, h] = -2 Pi^T[I f, h]        if h(T) = 0,

and for monomials, using the symmetry of the response kernel,

    B^T[t^a F, t^a H] = (Pi^T[t^a F, t^{a+1} H] - Pi^T[t^{a+1} F, t^a H]) / (a + 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .errors import IpeqError
from .operator_core import DiscretizedOperator
from .time_domain import BoundarySource, Monomial, ResponseKernel, response_direct

FORM_KINDS = ("antisymmetric-BT", "flux-PiT")


class CompatibilityError(IpeqError, ValueError):
    """A source does not vanish to second order at ``t = 0``."""


def _responses(op, sources, T: float, dt: float) -> list[np.ndarray]:
    """Wave responses on the grid ``0, dt, ..., T``.

    ``op`` is an operator (responses by time stepping) or a callable
    ``(f, T, dt) -> ResponseKernel | array``.
    """
    out = []
    for f in sources:
        if isinstance(op, DiscretizedOperator):
            r = response_direct(op, "wave", f, T, dt)
        else:
            r = op(f, T, dt)
        out.append(np.real(r.samples if isinstance(r, ResponseKernel) else np.asarray(r)))
    return out


def _grid(T, dt):
    n = int(round(T / dt))
    if n < 2 or abs(n * dt - T) > 1e-9 * T:
        raise ValueError("T must be a positive multiple of dt")
    return dt * np.arange(n + 1)


def _integral(a: np.ndarray, b: np.ndarray, dt: float) -> float:
    return float(simpson(np.sum(a * b, axis=1), dx=dt))


def _require_real(*sources):
    for s in sources:
        if not s.is_real:
            raise ValueError("finite-time forms take real sources")


def form_BT(op, f: BoundarySource, h: BoundarySource, T: float, dt: float) -> float:
    """``int_0^T int (f R h - h R f) dS dt`` from computed responses."""
    _require_real(f, h)
    t = _grid(T, dt)
    Rf, Rh = _responses(op, (f, h), T, dt)
    return _integral(f(t), Rh, dt) - _integral(h(t), Rf, dt)


def form_PiT(op, f: BoundarySource, h: BoundarySource, T: float, dt: float) -> float:
    """``-1/2 int_0^T int (R f dh/dt + df/dt R h) dS dt``."""
    _require_real(f, h)
    t = _grid(T, dt)
    Rf, Rh = _responses(op, (f, h), T, dt)
    return -0.5 * (_integral(Rf, h(t, 1), dt) + _integral(f(t, 1), Rh, dt))


@dataclass(frozen=True)
class FiniteTimeForm:
    """A bilinear form on real sources over ``[0, T]``.

    The evaluator is opaque: a ``flux-PiT`` form built by :func:`flux_oracle`
    answers ``Pi^T`` queries and exposes nothing else.
    """

    T: float
    kind: str
    evaluator: Callable[[BoundarySource, BoundarySource], float]

    def __post_init__(self):
        if self.kind not in FORM_KINDS:
            raise ValueError(f"kind must be one of {FORM_KINDS}")

    def __call__(self, f: BoundarySource, h: BoundarySource) -> float:
        return float(self.evaluator(f, h))


def flux_oracle(op, T: float, dt: float) -> FiniteTimeForm:
    return FiniteTimeForm(T, "flux-PiT", lambda f, h: form_PiT(op, f, h, T, dt))


def bt_oracle(op, T: float, dt: float) -> FiniteTimeForm:
    return FiniteTimeForm(T, "antisymmetric-BT", lambda f, h: form_BT(op, f, h, T, dt))


def monomial(F, alpha: float) -> BoundarySource:
    """``t^alpha F(x)``."""
    return BoundarySource.separable(np.asarray(F, dtype=float), Monomial(float(alpha)))


def split_at_horizon(f: BoundarySource, T: float, alpha: float) -> tuple[BoundarySource, np.ndarray]:
    """``f = f0 + t^alpha F`` with ``F = f(T) / T^alpha``, so ``f0(T) = 0``."""
    F = np.real(f(T)) / T ** alpha
    return f + monomial(F, alpha) * -1.0, F


def _check_source(f: BoundarySource, tol: float = 1e-12):
    scale = max(1.0, max((np.abs(t.F).max() for t in f.terms), default=1.0))
    for j in range(3):
        if np.abs(f(0.0, j)).max(initial=0.0) > tol * scale:
            raise CompatibilityError("source must vanish to second order at t=0")


def bt_from_flux(flux: FiniteTimeForm | Callable, f: BoundarySource, h: BoundarySource, T: float,
                 alpha: float = 3.0) -> float:
    """``B^T[f, h]`` from ``Pi^T`` queries only.

    With ``f = f0 + t^a F`` and ``h = h0 + t^a H`` (``f0(T) = h0(T) = 0``):

        B^T[f, h] = 2 Pi^T[I h, f0] - 2 Pi^T[t^{a+1} F / (a+1), h0]
                    + (Pi^T[t^a F, t^{a+1} H] - Pi^T[t^{a+1} F, t^a H]) / (a + 1).
    """
    if not alpha > 2:
        raise ValueError("alpha must exceed 2")
    if getattr(flux, "kind", "flux-PiT") != "flux-PiT":
        raise ValueError("bt_from_flux needs a flux-PiT form")
    if getattr(flux, "T", T) != T:
        raise ValueError(f"flux form horizon {flux.T} differs from T={T}")
    _require_real(f, h)
    _check_source(f)
    _check_source(h)
    f0, F = split_at_horizon(f, T, alpha)
    h0, H = split_at_horizon(h, T, alpha)
    a1 = alpha + 1.0
    total = 2.0 * flux(h.integrated(), f0)
    total -= 2.0 / a1 * flux(monomial(F, a1), h0)
    total += (flux(monomial(F, alpha), monomial(H, a1)) - flux(monomial(F, a1), monomial(H, alpha))) / a1
    return float(total)


def boundary_term(op, F, H, T: float, alpha: float, dt: float) -> float:
    """``int H R(t^{alpha+1} F)(T) dS``."""
    (R,) = _responses(op, (monomial(F, alpha + 1),), T, dt)
    return float(np.dot(np.asarray(H, dtype=float), R[-1]))


def _rel(a: float, b: float, scale: float = 0.0) -> float:
    return abs(a - b) / max(abs(a), abs(b), scale, 1e-300)


def verify_identities(op, F, H, T: float, alpha: float, dt: float, f0: BoundarySource | None = None) -> dict:
    """Residuals of the integration-by-parts and monomial identities on one pair.

    ``f0`` (vanishing at ``T``) drives the antiderivative identity against
    ``t^alpha H``; it defaults to a bump inside ``[0, T]`` along ``F``.
    Equal time profiles make ``B^T[t^a F, t^a H]`` vanish by kernel symmetry,
    so the monomial residual is scaled by the size of its two flux terms.
    """
    from .time_domain import PolynomialBump

    a1 = alpha + 1.0
    PiT = flux_oracle(op, T, dt)
    fa, fa1 = monomial(F, alpha), monomial(F, a1)
    ha, ha1 = monomial(H, alpha), monomial(H, a1)
    if f0 is None:
        f0 = BoundarySource.separable(np.asarray(F, dtype=float), PolynomialBump(0.1 * T, 0.8 * T))
    lhs43 = form_BT(op, f0, ha, T, dt)
    rhs43 = 2.0 * PiT(ha.integrated(), f0)
    lhs44 = form_BT(op, fa, ha, T, dt)
    p1, p2 = PiT(fa, ha1), PiT(fa1, ha)
    rhs44 = (p1 - p2) / a1
    bF = boundary_term(op, F, H, T, alpha, dt)
    bH = boundary_term(op, H, F, T, alpha, dt)
    pair_sum = p2 + p1
    # inward-flux orientation: the boundary terms sum to -2 T^-a (...)
    rhs68 = -2.0 * T ** -alpha * pair_sum
    return {
        "T": T, "alpha": alpha, "dt": dt,
        "antiderivative": {"lhs": lhs43, "rhs": rhs43, "residual": _rel(lhs43, rhs43)},
        "monomial": {"lhs": lhs44, "rhs": rhs44, "residual": _rel(lhs44, rhs44, max(abs(p1), abs(p2)) / a1)},
        "boundary_sum": {"lhs": bF + bH, "rhs": rhs68, "residual": _rel(bF + bH, rhs68)},
        "kernel_symmetry": {"lhs": bF, "rhs": bH, "residual": _rel(bF, bH)},
    }
