"""High-frequency expansion of ``Lambda_{-tau^2}`` at the boundary.

For each decoupled block ``-(p v')' + Q v = -tau^2 m v`` the decaying
solution has logarithmic flux ``W = p v_s / v`` (``s`` = distance into the
domain) obeying the Riccati equation

    W_s = Q + tau^2 m - W^2 / p.

Expanding ``W = sum_j w_j(s) tau^{1-j}`` gives

    w_0 = -sqrt(p m),     w_1 = -p w_0' / (2 w_0),
    w_j = (p ([j == 2] Q - w_{j-1}') - sum_{0<a<j} w_a w_{j-a}) / (2 w_0),

and the boundary symbol coefficients are ``P_j = sigma^2 w_j(0)`` with
``sigma`` the boundary-basis scale.  Jets in ``s`` are carried as truncated
power series.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import FitError, NumericError, OrderError
from .operator_core import DiscretizedOperator, block_coefficients

MAX_ORDER = 3
JET_DEGREE = 8
JET_SPAN = 0.1


def _jet(fun, x0: float, direction: float, degree: int = JET_DEGREE, span: float = JET_SPAN) -> np.ndarray:
    """Taylor coefficients in ``s`` of ``fun(x0 + direction * s)`` for ``s >= 0``."""
    n = degree + 6
    nodes = 0.5 * span * (1.0 - np.cos(np.pi * (np.arange(n) + 0.5) / n))
    vals = np.asarray(fun(x0 + direction * nodes), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericError(f"coefficient not finite near the boundary point {x0}")
    # fit in the scaled variable for conditioning
    coef = npoly.polyfit(nodes / span, vals, degree + 3)
    coef = coef / span ** np.arange(len(coef))
    return coef[: degree + 1]


def _trunc(a, n):
    out = np.zeros(n)
    a = np.asarray(a)[:n]
    out[: len(a)] = a
    return out


def _mul(a, b, n):
    return _trunc(npoly.polymul(a, b), n)


def _inv(a, n):
    """Power-series reciprocal of ``a`` to ``n`` terms."""
    if abs(a[0]) == 0:
        raise NumericError("series reciprocal of a function vanishing at the boundary")
    out = np.zeros(n)
    out[0] = 1.0 / a[0]
    for k in range(1, n):
        acc = sum(a[j] * out[k - j] for j in range(1, min(k, len(a) - 1) + 1))
        out[k] = -acc / a[0]
    return out


def _der(a, n):
    return _trunc(npoly.polyder(a), n)


def _boundary_point(op: DiscretizedOperator, slot: int):
    """Block coordinate of boundary slot ``slot`` and the inward direction."""
    if op.geometry.kind == "interval":
        return (0.0, 1.0) if slot == 0 else (1.0, -1.0)
    return op.geometry.radius, -1.0


def _mode_of_slot(op: DiscretizedOperator, slot: int) -> int:
    return 0 if op.geometry.kind == "interval" else slot - op.geometry.mode_cutoff


def _sigma2(op: DiscretizedOperator) -> float:
    return 1.0 if op.geometry.kind == "interval" else 1.0 / op.geometry.radius


def riccati_coefficients(op: DiscretizedOperator, mode: int, slot: int, order: int = MAX_ORDER) -> np.ndarray:
    """``P_0 .. P_order`` for one boundary slot and angular mode."""
    if op.coefficients is None:
        raise NumericError("operator carries no block coefficients")
    if order > MAX_ORDER:
        raise OrderError(f"order {order} exceeds {MAX_ORDER}")
    p_f, Q_f, m_f = block_coefficients(op, mode)
    x0, direction = _boundary_point(op, slot)
    n = JET_DEGREE + 1
    span = min(JET_SPAN, 0.25 * op.geometry.length)
    p = _jet(p_f, x0, direction, span=span)
    Q = _jet(Q_f, x0, direction, span=span)
    m = _jet(m_f, x0, direction, span=span)
    pm = _mul(p, m, n)
    if pm[0] <= 0:
        raise NumericError("p m must be positive at the boundary")
    w0 = -_jet(lambda x: np.sqrt(p_f(x) * m_f(x)), x0, direction, span=span)
    inv2w0 = _inv(2 * w0, n)
    w = [w0]
    w.append(-_mul(_mul(p, _der(w0, n), n), inv2w0, n))
    for j in range(2, order + 1):
        rhs = -_der(w[j - 1], n)
        if j == 2:
            rhs = rhs + Q
        acc = _mul(p, rhs, n)
        for a in range(1, j):
            acc = acc - _mul(w[a], w[j - a], n)
        w.append(_mul(acc, inv2w0, n))
    return _sigma2(op) * np.array([wj[0] for wj in w[: order + 1]])


@dataclass(frozen=True)
class SymbolExpansion:
    """Per-slot coefficients of ``Lambda_{-tau^2} ~ sum_j P_j tau^{1-j}``.

    ``coefficients[slot, j]`` is the full per-mode value of ``P_j``.
    ``principal[slot, j]`` (``j = 2, 3``) holds the part proportional to the
    squared angular wavenumber ``k^2`` on the disc and is zero on the
    interval, whose boundary has no tangential directions.
    """

    coefficients: np.ndarray
    principal: np.ndarray
    modes: np.ndarray
    order: int = MAX_ORDER
    populated: dict = field(default_factory=lambda: {"P0": True, "P1": True, "P2_principal": True,
                                                     "P3_principal": True, "P2_lower": True,
                                                     "P3_lower": True})

    @property
    def rho(self) -> np.ndarray:
        return -self.coefficients[:, 0]

    @property
    def mean_curvature(self) -> np.ndarray:
        return -2.0 * self.coefficients[:, 1] / self.rho

    def to_json(self) -> dict:
        rows = []
        for slot, k in enumerate(self.modes):
            rows.append({"slot": slot, "mode": int(k),
                         "P": [float(v) for v in self.coefficients[slot]],
                         "principal_k2": [float(v) for v in self.principal[slot]]})
        return {"order": self.order, "populated": self.populated, "modes": rows}


def symbol_coefficients(op: DiscretizedOperator, order: int = MAX_ORDER) -> SymbolExpansion:
    """Boundary symbol coefficients ``P_0 .. P_3`` for every boundary slot."""
    nb = op.n_boundary
    coef = np.zeros((nb, MAX_ORDER + 1))
    principal = np.zeros((nb, MAX_ORDER + 1))
    modes = np.zeros(nb, dtype=int)
    for slot in range(nb):
        k = _mode_of_slot(op, slot)
        modes[slot] = k
        coef[slot, : order + 1] = riccati_coefficients(op, k, slot, order)
    if op.geometry.kind == "disc" and order >= 2:
        # P_2 and P_3 are affine in k^2 (Q is), so two modes fix the k^2 part
        base = riccati_coefficients(op, 0, op.geometry.mode_cutoff, order)
        one = riccati_coefficients(op, 1, op.geometry.mode_cutoff, order)
        principal[:, 2:order + 1] = (one - base)[2:order + 1] * (modes[:, None] ** 2)
    return SymbolExpansion(coef, principal, modes, order)


def asymptotic_dtn_apply(expansion: SymbolExpansion, tau: float, h, order: int = 1) -> np.ndarray:
    """``sum_{j <= order} P_j tau^{1-j} h`` in the boundary basis."""
    if order > expansion.order or order < 0:
        raise OrderError(f"order {order} not populated (have {expansion.order})")
    if not tau > 0:
        raise ValueError("tau must be positive")
    powers = float(tau) ** (1.0 - np.arange(order + 1))
    diag = expansion.coefficients[:, : order + 1] @ powers
    return diag * np.asarray(h)


@dataclass(frozen=True)
class RhoHEstimate:
    rho: np.ndarray
    mean_curvature: np.ndarray
    residual: np.ndarray
    coefficients: np.ndarray  # fitted P_0..P_3 per slot


def _ladder(taus):
    t = np.asarray(taus, dtype=float)
    if t.ndim != 1 or len(t) < 5 or np.any(t <= 0):
        raise FitError("need at least five positive tau values")
    if t.max() / t.min() < 2.0:
        raise FitError("tau ladder spans less than a factor of two")
    return t


def estimate_rho_H(sampler, taus=None, route: str = "dtn", modes=None) -> RhoHEstimate:
    """Fit ``rho`` and ``H`` from DtN samples at ``z = -tau^2``.

    ``route="dtn"`` fits the diagonal of ``Lambda_{-tau^2}`` with
    ``[tau, 1, 1/tau, 1/tau^2, 1/tau^3]``: ``rho = -c_tau``, ``H = -2 c_1 / rho``.
    ``route="derivative"`` fits ``d/dz Lambda`` with
    ``[1/tau, 1/tau^3, ..., 1/tau^6]`` (the constant term drops out), reading
    ``rho`` from the leading coefficient and ``H`` from the ``k^2`` parts of
    ``P_2`` and ``P_3`` across the disc ``modes``; a boundary without
    tangential directions (``modes`` None or all zero) has ``H = 0``.
    ``sampler(z)`` returns ``Lambda_z`` (or its derivative) as a matrix or sample.
    """
    if taus is None:
        taus = np.geomspace(10.0, 40.0, 9) if route == "dtn" else np.geomspace(20.0, 80.0, 12)
    t = _ladder(taus)
    mats = []
    for tau in t:
        out = sampler(-tau * tau)
        mats.append(np.real(np.diag(np.asarray(getattr(out, "matrix", out)))))
    Y = np.array(mats)
    if route == "dtn":
        G = np.column_stack([t, np.ones_like(t), 1 / t, 1 / t**2, 1 / t**3])
    elif route == "derivative":
        G = np.column_stack([1 / t, 1 / t**3, 1 / t**4, 1 / t**5, 1 / t**6])
    else:
        raise ValueError(f"unknown route {route!r}")
    if np.linalg.cond(G / np.linalg.norm(G, axis=0)) > 1e10:
        raise FitError("ill-conditioned tau ladder")
    coef, *_ = np.linalg.lstsq(G, Y, rcond=None)
    resid = np.sqrt(np.mean((G @ coef - Y) ** 2, axis=0))
    nb = Y.shape[1]
    P = np.zeros((nb, 4))
    if route == "dtn":
        P[:] = np.column_stack([-coef[0], coef[1], coef[2], coef[3]])
        rho = -coef[0]
        H = -2.0 * coef[1] / rho
    else:
        # d/dz Lambda = rho/(2 tau) + P2/(2 tau^3) + P3/tau^4
        rho = 2.0 * coef[0]
        P[:, 0] = -rho
        P[:, 2] = 2.0 * coef[1]
        P[:, 3] = coef[2]
        H = np.zeros(nb)
        if modes is not None and np.any(np.asarray(modes) != 0):
            k2 = np.asarray(modes, dtype=float) ** 2
            # low modes only: the expansion is in k / tau
            low = k2 <= max(4.0, np.sort(np.unique(k2))[min(1, len(np.unique(k2)) - 1)])
            G2 = np.column_stack([k2[low], np.ones(int(low.sum()))])
            s2, *_ = np.linalg.lstsq(G2, P[low, 2], rcond=None)
            s3, *_ = np.linalg.lstsq(G2, P[low, 3], rcond=None)
            # principal parts: P2 ~ -rho g k^2 / 2 and P3 ~ rho H g k^2 / 2
            H = np.full(nb, -s3[0] / s2[0])
    return RhoHEstimate(rho, H, resid, P)
