"""Fixed-frequency Dirichlet-to-Neumann maps and their spectral transcoding.

``Lambda_z h`` is the flux ``B v`` of the solution of ``(a - z) v = 0`` with
trace ``h``.  Near an eigenvalue ``Lambda_z ~ -K_l / (z - lambda_l)`` up to
the global sign :func:`global_sign`, with ``K_l = sum trace (x) trace`` over
the cluster.  This module samples ``Lambda_z`` directly, rebuilds it from
boundary spectral data (derivative sum plus a high-frequency anchor), and
recovers boundary spectral data from samples by contour integration.
"""

from __future__ import annotations

import warnings
import weakref
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.linalg import solve_banded

from .errors import (
    AnchorError,
    ContaminationError,
    NearPoleError,
    NumericError,
    PathError,
    ShapeError,
)
from .operator_core import (
    DiscretizedOperator,
    GeometryModel,
    GeometryWeights,
    ModeBlock,
    build_operator,
    eigendecompose,
    eigenvalues,
)
from .spectral_data import BoundarySpectralData

EPS_POLE = 1e-9
CIRCLE_POINTS = 64


@dataclass(frozen=True)
class DtnSample:
    """``Lambda_z`` as a dense boundary matrix."""

    z: complex
    matrix: np.ndarray
    provenance: str = "direct"
    budget: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        m = np.asarray(self.matrix, dtype=complex)
        return {
            "z": [float(np.real(self.z)), float(np.imag(self.z))],
            "matrix_re": m.real.tolist(),
            "matrix_im": m.imag.tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DtnSample":
        try:
            z = complex(data["z"][0], data["z"][1])
            m = np.asarray(data["matrix_re"], dtype=float) + 1j * np.asarray(data["matrix_im"], dtype=float)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ShapeError(f"malformed DtN sample: {exc}") from exc
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError("DtN matrix must be square")
        return cls(z, m, data.get("provenance", "direct"))


@dataclass(frozen=True)
class ResidueKernel:
    """``K_l = s * Res_{z = lambda} Lambda_z`` for one eigenvalue cluster."""

    eigenvalue: float
    kernel: np.ndarray
    rank: int
    raw: np.ndarray  # before symmetrization and PSD projection
    contamination: float

    def factor(self, tol: float = 1e-8) -> np.ndarray:
        """Rows ``xi_j`` with ``K = sum xi_j (x) conj(xi_j)``, ``rank`` of them."""
        w, V = np.linalg.eigh(self.kernel)
        order = np.argsort(w)[::-1][: self.rank]
        return (V[:, order] * np.sqrt(np.clip(w[order], 0.0, None))).T


class Pole(float):
    """A located eigenvalue; ``merged`` flags poles closer than the resolution."""

    merged: bool = False
    radius: float = 0.0

    def __new__(cls, value, merged=False, radius=0.0):
        obj = super().__new__(cls, value)
        obj.merged = merged
        obj.radius = radius
        return obj


Sampler = Callable[[complex], "DtnSample | np.ndarray"]


def _matrix(sampler: Sampler, z: complex) -> np.ndarray:
    out = sampler(z)
    return np.asarray(out.matrix if isinstance(out, DtnSample) else out)


# ------------------------------------------------------------ direct solves
class _BlockSolver:
    """Banded interior solves for one block."""

    def __init__(self, b: ModeBlock, bandwidth: int):
        self.block = b
        kii = b.sub("I", "I")
        n = kii.shape[0]
        u = min(bandwidth, n - 1)
        ab = np.zeros((2 * u + 1, n))
        for d in range(-u, u + 1):
            diag = np.diagonal(kii, d)
            if d >= 0:
                ab[u - d, d:] = diag
            else:
                ab[u - d, : n + d] = diag
        self.u = u
        self.ab = ab
        self.mass_i = b.mass[b.interior]
        self.kib = b.sub("I", "B")
        self.kbb = b.sub("B", "B")
        self.mass_b = b.mass[b.boundary]

    def solve(self, z: complex, rhs: np.ndarray) -> np.ndarray:
        ab = self.ab.astype(np.result_type(self.ab, z))
        ab[self.u] = ab[self.u] - z * self.mass_i
        try:
            return solve_banded((self.u, self.u), ab, rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericError(f"interior solve failed at z={z}: {exc}") from exc


_SOLVERS: "weakref.WeakKeyDictionary[DiscretizedOperator, list]" = weakref.WeakKeyDictionary()


def _solvers(op: DiscretizedOperator) -> list[_BlockSolver]:
    s = _SOLVERS.get(op)
    if s is None:
        shared: dict = {}
        s = []
        for b in op.blocks:
            key = id(b.stiffness)
            if key not in shared:
                shared[key] = _BlockSolver(b, op.geometry.degree)
            s.append(shared[key])
        _SOLVERS[op] = s
    return s


def _check_pole(op: DiscretizedOperator, z: complex, eps: float):
    lam = eigenvalues(op)
    d = np.abs(lam - z)
    i = int(np.argmin(d))
    if d[i] <= eps * (1.0 + abs(lam[i])):
        raise NearPoleError(z, float(lam[i]), float(d[i]))


def solve_dirichlet(op: DiscretizedOperator, z: complex, h, eps_pole: float = EPS_POLE) -> np.ndarray:
    """Node vector ``v`` with ``(A_h - z) v = 0`` inside and boundary data ``h``."""
    h = np.asarray(h)
    if h.shape != (op.n_boundary,):
        raise ShapeError(f"boundary vector must have length {op.n_boundary}")
    _check_pole(op, z, eps_pole)
    out = np.zeros(op.n_nodes, dtype=np.result_type(h, z, float))
    for b, sl, sv in zip(op.blocks, op.block_slices, _solvers(op)):
        vb = b.scale * h[b.columns]
        if not np.any(vb):
            continue
        vi = sv.solve(z, -sv.kib @ vb)
        out[sl.start + b.boundary] = vb
        out[sl.start + b.interior] = vi
        res = b.sub("I", "I") @ vi - z * sv.mass_i * vi + sv.kib @ vb
        scale = np.linalg.norm(sv.kib @ vb) + 1e-300
        if np.linalg.norm(res) > 1e-10 * scale * max(1.0, np.sqrt(len(vi))):
            raise NumericError(f"Dirichlet solve residual {np.linalg.norm(res) / scale:.2e} too large")
    if np.isrealobj(h) and np.isreal(z):
        out = out.real
    return out


def dtn_direct(op: DiscretizedOperator, z: complex, eps_pole: float = EPS_POLE) -> DtnSample:
    """``Lambda_z`` by interior solves, one column per boundary basis vector.

    Uses the Green-consistent flux, so the result equals
    ``P^T [z M_BB - K_BB + K_BI (K_II - z M_II)^{-1} K_IB] P`` exactly.
    """
    _check_pole(op, z, eps_pole)
    nb = op.n_boundary
    lam = np.zeros((nb, nb), dtype=complex)
    for b, sv in zip(op.blocks, _solvers(op)):
        x = sv.solve(z, sv.kib)
        local = z * np.diag(sv.mass_b) - sv.kbb + sv.kib.T @ x
        S = np.diag(b.scale)
        lam[np.ix_(b.columns, b.columns)] += S @ local @ S
    if np.isreal(z):
        lam = lam.real
    return DtnSample(z, lam, "direct")


def dtn_sampler(op: DiscretizedOperator) -> Callable[[complex], DtnSample]:
    """Closure ``z -> dtn_direct(op, z)`` for the transcoding routines."""
    return lambda z: dtn_direct(op, z)


@lru_cache(maxsize=1)
def global_sign() -> int:
    """Sign ``s`` making ``K_l = s * Res Lambda_z`` positive semidefinite.

    Fixed once by computing the first residue of a small interval model.
    """
    op = build_operator(GeometryModel("interval", n=12, degree=2))
    lam1 = float(eigendecompose(op, 1).values[0])
    th = 2 * np.pi * np.arange(16) / 16
    r = 1.0
    res = sum(np.trace(dtn_direct(op, lam1 + r * np.exp(1j * t)).matrix) * r * np.exp(1j * t) for t in th) / 16
    return 1 if res.real > 0 else -1


# -------------------------------------------------------- i -> ii (BSD sum)
@dataclass(frozen=True)
class DerivativeEstimate:
    """``d/dz Lambda_z`` from truncated spectral data.

    ``matrix = partial + tail``: the sum over trusted entries plus a Weyl-law
    estimate of everything omitted.  ``tail_bound`` is the size of that
    estimate, so it bounds the change caused by truncating the data.
    """

    z: complex
    matrix: np.ndarray
    partial: np.ndarray
    tail: np.ndarray
    tail_bound: float
    trusted: int


RESOLUTION_DRIFT = 1e-4


@dataclass(frozen=True)
class _Channel:
    """Entries supported on one set of boundary slots, with a tail model.

    Each channel of the models here is a 1-D Sturm-Liouville family, so its
    counting function is ``N(lambda) ~ A sqrt(lambda) + B`` and the kernels
    grow like ``(C + D (-1)^n) lambda``; the alternating part (opposite
    endpoints of an interval) is summed by the Euler transform.
    """

    index: np.ndarray
    A: float
    B: float
    C: np.ndarray
    D: np.ndarray
    u0: float  # sqrt of the eigenvalue where the tail starts
    first: int  # 1-based index of the first omitted entry

    def alternating(self, z):
        """``sum_{n >= first} (-1)^n lambda_n / (lambda_n - z)^2`` to second order."""

        def g(n):
            lam = ((n - self.B) / self.A) ** 2
            return lam / (lam - z) ** 2

        m = self.first
        dg = (g(m + 0.5) - g(m - 0.5))
        val = (-1) ** m * (0.5 * g(m) - 0.25 * dg)
        return val.real if np.isreal(z) else val

    def tail(self, z):
        """``int_{u0^2}^inf lambda / (lambda - z)^2 dN`` in closed form."""
        w = np.sqrt(-complex(z))
        u0 = self.u0
        if abs(w) < 1e-8 * u0:
            first = 1.0 / (2 * u0)
        else:
            first = np.arctan(w / u0) / (2 * w)
        val = self.A * (first + u0 / (2 * (u0**2 - z)))
        return val.real if np.isreal(z) else val


class _SpectralSum:
    """Derivative of ``Lambda_z`` rebuilt from boundary spectral data.

    Entries are grouped by the boundary slots their traces occupy.  Within a
    group the ratio ``|trace|^2 / lambda`` settles to a constant; once it
    drifts away again by more than ``RESOLUTION_DRIFT`` the entries are
    treated as unresolved and replaced by the Weyl tail.
    """

    def __init__(self, bsd: BoundarySpectralData, tail: bool = True, keep_fraction: float = 1.0):
        lam, tr = bsd.eigenvalues, bsd.traces
        self.s = global_sign()
        support = np.abs(tr) ** 2 > 1e-12 * np.max(np.abs(tr) ** 2, axis=1, keepdims=True).clip(1e-300)
        keys: dict = {}
        for i, row in enumerate(support):
            keys.setdefault(tuple(np.flatnonzero(row)), []).append(i)
        keep = np.ones(len(lam), dtype=bool)
        self.channels: list[_Channel] = []
        for idx in keys.values():
            idx = np.array(idx)
            ch = self._channel(lam[idx], tr[idx], idx, keep_fraction) if tail else None
            if ch is None:
                continue
            keep[idx] = False
            keep[ch.index] = True
            self.channels.append(ch)
        self.lam = lam[keep]
        self.tr = tr[keep]
        self.trusted = int(keep.sum())

    @staticmethod
    def _channel(lam, tr, idx, keep_fraction=1.0):
        n = len(lam)
        if n < 8 or lam[-1] <= 0:
            return None
        r = np.sum(np.abs(tr) ** 2, axis=1) / np.where(lam > 0, lam, np.nan)
        ref = np.nanmedian(r[n // 4: n // 2 + 1])
        cut = n
        for j in range(n // 2, n):
            if not abs(r[j] / ref - 1.0) < RESOLUTION_DRIFT:
                cut = j
                break
        cut = int(round(cut * keep_fraction))
        if cut < 6:
            return None
        fit = np.arange(cut // 2, cut)
        fit = fit[lam[fit] > 0]
        if len(fit) < 4:
            return None
        G = np.column_stack([np.sqrt(lam[fit]), np.ones(len(fit))])
        (A, B), *_ = np.linalg.lstsq(G, fit + 1.0, rcond=None)
        if not A > 0:
            return None
        t = tr[fit]
        y = np.einsum("li,lj->lij", t / lam[fit, None], t.conj()).reshape(len(fit), -1)
        sign = (-1.0) ** (fit + 1)
        coef, *_ = np.linalg.lstsq(np.column_stack([np.ones(len(fit)), sign]), y, rcond=None)
        nb = tr.shape[1]
        C, D = coef[0].reshape(nb, nb), coef[1].reshape(nb, nb)
        u0 = (cut + 0.5 - B) / A
        return _Channel(idx[:cut], float(A), float(B), C, D, float(u0), cut + 1)

    def partial(self, z):
        w = 1.0 / (z - self.lam) ** 2
        return -self.s * np.einsum("l,li,lj->ij", w, self.tr, self.tr.conj())

    def tail(self, z):
        out = 0.0
        for ch in self.channels:
            out = out - self.s * (ch.C * ch.tail(z) + ch.D * ch.alternating(z))
        return out if self.channels else np.zeros((self.tr.shape[1],) * 2)

    def __call__(self, z):
        return self.partial(z) + self.tail(z)


def dtn_derivative_from_bsd(bsd: BoundarySpectralData, z: complex, tail: bool = True,
                            eps_pole: float = EPS_POLE) -> DerivativeEstimate:
    """``d/dz Lambda_z = -s sum K_l / (z - lambda_l)^2`` with a Weyl tail estimate."""
    lam = bsd.eigenvalues
    d = np.abs(lam - z)
    if len(lam) and d.min() <= eps_pole * (1.0 + abs(lam[np.argmin(d)])):
        i = int(np.argmin(d))
        raise NearPoleError(z, float(lam[i]), float(d[i]))
    ssum = _SpectralSum(bsd, tail)
    partial = ssum.partial(z)
    tail_m = ssum.tail(z)
    total = partial + tail_m
    if np.isreal(z):
        total, partial, tail_m = total.real, partial.real, np.real(tail_m)
    bound = float(np.max(np.abs(tail_m))) if ssum.channels else float("nan")
    return DerivativeEstimate(z, total, partial, tail_m, bound, ssum.trusted)


def _detour_path(z: complex, start: float, poles: Sequence[float], radius: float):
    """Pieces ``(kind, params)`` from ``start`` to ``z`` avoiding ``poles``.

    Along the real axis with semicircles over (or under) each eigenvalue, then
    vertically to ``z``.  When ``Re z`` falls inside a detour the path rises
    first and runs horizontally at height ``Im z`` instead.
    """
    x_end = float(np.real(z))
    y = float(np.imag(z))
    blocked = [p for p in poles if abs(p - x_end) < radius]
    if blocked:
        if abs(y) < radius:
            raise PathError(f"z={z} lies within the detour radius {radius} of eigenvalue {blocked[0]}")
        return [("vertical", (start, y)), ("horizontal", (start, x_end, y))]
    up = y >= 0
    pieces = []
    x = start
    for lam in sorted(p for p in poles if start < p < x_end):
        if lam - radius <= x:
            raise PathError(f"eigenvalue {lam} too close to the anchor point")
        pieces.append(("line", (x, lam - radius)))
        pieces.append(("arc", (lam, radius, up)))
        x = lam + radius
    if x_end != x:
        pieces.append(("line", (x, x_end)))
    if y != 0:
        pieces.append(("vertical", (x_end, y)))
    return pieces


def _gauss_piece(fun, kind, params, tol, max_level=9):
    """Integrate ``fun`` over one smooth piece by doubling Gauss-Legendre."""

    def rule(n):
        t, w = np.polynomial.legendre.leggauss(n)
        if kind == "line":
            a, b = params
            zs = 0.5 * (a + b) + 0.5 * (b - a) * t
            dz = np.full(n, 0.5 * (b - a), dtype=complex)
        elif kind == "arc":
            lam, r, up = params
            # theta from pi to 0 (upper) or -pi to 0 (lower)
            th0 = np.pi if up else -np.pi
            th = 0.5 * th0 * (1 - t)
            zs = lam + r * np.exp(1j * th)
            dz = 1j * r * np.exp(1j * th) * (-0.5 * th0)
        elif kind == "vertical":
            x, y = params
            zs = x + 1j * 0.5 * y * (1 + t)
            dz = np.full(n, 0.5j * y)
        else:
            a, b, y = params
            zs = 0.5 * (a + b) + 0.5 * (b - a) * t + 1j * y
            dz = np.full(n, 0.5 * (b - a), dtype=complex)
        return sum(wi * di * fun(zi) for wi, di, zi in zip(w, dz, zs))

    n = 8
    prev = rule(n)
    for _ in range(max_level):
        n *= 2
        cur = rule(n)
        err = float(np.max(np.abs(cur - prev)))
        if err <= tol * (1.0 + float(np.max(np.abs(cur)))):
            return cur, err
        prev = cur
    return cur, err


def dtn_from_bsd(bsd: BoundarySpectralData, weights: GeometryWeights, z: complex, tau0: float,
                 tail: bool = True, quad_tol: float = 1e-10, margin: float = 1.0,
                 eps_pole: float = EPS_POLE) -> DtnSample:
    """Rebuild ``Lambda_z`` from boundary spectral data and boundary geometry.

    ``Lambda_{-tau0^2}`` is replaced by its two-term high-frequency form
    ``-tau0 rho - rho H / 2``; the derivative sum is then integrated along a
    path from ``-tau0^2`` to ``z`` that detours around eigenvalues on
    semicircles.  ``budget`` reports the anchor remainder (estimated from the
    derivative at the anchor), the quadrature error, and the tail size.
    """
    lam = bsd.eigenvalues
    z0 = -float(tau0) ** 2
    if len(lam) and lam[0] - z0 < margin * max(1.0, float(tau0)):
        raise AnchorError(f"anchor {z0} is not left of the spectrum (lambda_1 = {lam[0]})")
    rho = np.asarray(weights.rho, dtype=float)
    H = np.asarray(weights.mean_curvature, dtype=float)
    anchor = np.diag(-tau0 * rho - 0.5 * rho * H).astype(complex)

    gaps = np.diff(lam)
    radius = max(eps_pole, 0.25 * float(gaps[gaps > 1e-8].min())) if np.any(gaps > 1e-8) else 1.0
    radius = min(radius, 1.0)
    near = np.abs(lam - z)
    if len(lam) and near.min() <= eps_pole * (1 + abs(lam[np.argmin(near)])):
        i = int(np.argmin(near))
        raise NearPoleError(z, float(lam[i]), float(near[i]))
    poles = [float(l) for l in lam if l < np.real(z) + radius]
    pieces = _detour_path(complex(z), z0, poles, radius) if complex(z) != z0 else []

    deriv = _SpectralSum(bsd, tail)
    # a second model fitted on fewer entries gauges the tail-model error
    shorter = _SpectralSum(bsd, tail, keep_fraction=0.8) if deriv.channels else None

    total = np.zeros_like(anchor)
    tail_size = 0.0
    tail_model = 0.0
    qerr = 0.0
    for kind, params in pieces:
        val, err = _gauss_piece(deriv, kind, params, quad_tol)
        total += val
        qerr += err
        if shorter is not None:
            tval, _ = _gauss_piece(deriv.tail, kind, params, quad_tol)
            tail_size += float(np.max(np.abs(tval)))
            alt, _ = _gauss_piece(shorter, kind, params, quad_tol)
            tail_model += float(np.max(np.abs(alt - val)))
    # anchor remainder from Lambda'(-tau^2) = rho / (2 tau) + c / (2 tau^3) + ...
    d0 = deriv(z0)
    c = 2 * tau0**3 * (np.real(np.diag(d0)) - rho / (2 * tau0))
    anchor_err = float(np.max(np.abs(c))) / tau0
    matrix = anchor + total
    if np.isreal(z):
        matrix = matrix.real
    budget = {"anchor": anchor_err, "quadrature": qerr, "tail": tail_size,
              "tail_model": tail_model, "total": anchor_err + qerr + tail_model}
    return DtnSample(z, matrix, "reconstructed", budget)


# ------------------------------------------------------- ii -> i (residues)
def _circle(sampler: Sampler, center: float, radius: float, m: int):
    th = 2 * np.pi * (np.arange(m) + 0.5) / m
    pts = center + radius * np.exp(1j * th)
    vals = np.array([_matrix(sampler, p) for p in pts])
    e = np.exp(1j * th)
    m0 = radius * np.einsum("k,kij->ij", e, vals) / m
    m1 = radius**2 * np.einsum("k,kij->ij", e**2, vals) / m
    return m0, m1


def residue_kernel(sampler: Sampler, lam: float, radius: float, points: int = CIRCLE_POINTS,
                   tol: float = 1e-3, rank_tol: float = 1e-6) -> ResidueKernel:
    """``K = s/(2 pi i) oint Lambda_z dz`` on a circle, by the trapezoidal rule.

    The first moment ``oint (z - lambda) Lambda_z dz`` vanishes when the
    circle holds exactly one pole at ``lambda``; a large value raises
    :class:`ContaminationError`.
    """
    m0, m1 = _circle(sampler, float(lam), float(radius), points)
    s = global_sign()
    raw = s * m0
    scale = float(np.max(np.abs(raw))) + 1e-300
    contamination = float(np.max(np.abs(m1))) / (scale * radius)
    if contamination > tol:
        raise ContaminationError(
            f"circle of radius {radius} around {lam} holds more than one pole (moment ratio {contamination:.2e})"
        )
    K = 0.5 * (raw + raw.conj().T)
    K = K.real if np.allclose(K.imag, 0, atol=1e-12 * scale) else K
    w, V = np.linalg.eigh(K)
    if w.min() < -1e-2 * max(w.max(), 1e-300):
        raise NumericError(f"residue at {lam} is not semidefinite under the sign convention (min eig {w.min():.3g})")
    wc = np.clip(w, 0.0, None)
    K = (V * wc) @ V.conj().T
    rank = int(np.sum(wc > rank_tol * max(wc.max(), 1e-300)))
    return ResidueKernel(float(lam), K, rank, raw, contamination)


def _centroid(sampler: Sampler, center: float, radius: float, points: int):
    """Contour moments of ``tr Lambda``: residue sum, centroid and spread."""
    th = 2 * np.pi * (np.arange(points) + 0.5) / points
    pts = center + radius * np.exp(1j * th)
    tv = np.array([np.trace(_matrix(sampler, p)) for p in pts])
    w = radius * np.exp(1j * th) / points
    m0 = np.sum(tv * w)
    d = pts - center
    m1 = np.sum(d * tv * w)
    m2 = np.sum(d**2 * tv * w)
    return m0, m1, m2, float(np.max(np.abs(tv)))


def locate_poles(sampler: Sampler, a: float, b: float, resolution: float = 1e-8,
                 scan_points: int | None = None, points: int = CIRCLE_POINTS) -> list[Pole]:
    """Eigenvalues in ``[a, b]`` where ``Lambda_z`` has a nonzero residue.

    A scan of ``|tr Lambda|`` a little above the real axis brackets the
    candidates; each one is refined by the contour centroid
    ``oint z tr Lambda dz / oint tr Lambda dz`` on shrinking circles.  The
    returned poles carry ``radius``, a circle radius that excludes the
    neighbours seen in the scan.
    """
    if not b > a:
        raise ShapeError("empty search interval")
    n = scan_points or int(min(20000, max(400, 10 * (b - a))))
    h = (b - a) / n
    pad = 4 * h
    xs = np.linspace(a - pad, b + pad, n + 9)
    mag = np.array([abs(np.trace(_matrix(sampler, x + 1j * h))) for x in xs])
    cand = [xs[i] for i in range(1, len(xs) - 1) if mag[i] >= mag[i - 1] and mag[i] > mag[i + 1]]

    refined = []
    for x0 in cand:
        center, r = float(x0), 2 * h
        merged = False
        for _ in range(30):
            m0, m1, m2, top = _centroid(sampler, center, r, points)
            if abs(m0) < 1e-10 * top * r:
                center = None
                break
            shift = (m1 / m0).real
            center += shift
            if abs(shift) < resolution:
                # a lone simple pole has vanishing second central moment
                spread = abs(m2 / m0 - (m1 / m0) ** 2) ** 0.5
                merged = spread > max(10 * resolution, 1e-3 * r)
                break
            r = min(r, max(4 * abs(shift), 1e-4 * h))
        if center is None:
            continue
        if any(abs(center - q) < max(resolution, 1e-9 * (1 + abs(center))) for q, _ in refined):
            continue
        refined.append((center, merged))
    refined.sort()
    found = []
    for i, (c, merged) in enumerate(refined):
        if not a <= c <= b:
            continue
        nbrs = [abs(c - q) for j, (q, _) in enumerate(refined) if j != i]
        edge = min(c - (a - pad), (b + pad) - c)
        radius = 0.5 * min(nbrs + [2 * edge, 2 * max(1.0, 0.05 * abs(c))])
        if merged:
            warnings.warn(f"poles near {c:.10g} closer than the resolution; returned as one", stacklevel=2)
        found.append(Pole(c, merged, radius))
    return found


def bsd_from_dtn(sampler: Sampler, a: float, b: float, resolution: float = 1e-8,
                 boundary: dict | None = None, scan_points: int | None = None,
                 rank_tol: float = 1e-6) -> BoundarySpectralData:
    """Boundary spectral data from ``Lambda_z`` samples: poles, residues, factorization.

    Each residue kernel is split into ``rank`` orthogonal rank-one parts, so
    the result agrees with the source up to mixing inside clusters.
    """
    poles = locate_poles(sampler, a, b, resolution, scan_points)
    lams, traces = [], []
    for p in poles:
        rk = residue_kernel(sampler, float(p), p.radius, rank_tol=rank_tol)
        for xi in rk.factor():
            lams.append(float(p))
            traces.append(xi)
    if not lams:
        nb = _matrix(sampler, a - 1.0 + 1j).shape[0]
        return BoundarySpectralData(np.zeros(0), np.zeros((0, nb)), boundary or {})
    traces = np.array(traces)
    if np.iscomplexobj(traces) and np.allclose(traces.imag, 0):
        traces = traces.real
    return BoundarySpectralData(np.array(lams), traces, boundary or {})
