"""Energies, boundary energy fluxes, their bilinear forms and residue series,
and recovery of spectral data from flux measurements.

Sign conventions follow the inward flux ``B`` of the operator model: the
energy injected by a wave or Schrödinger source is
``-Re int int (R f) conj(df/dt) dt dS``, and the mass left behind by a
Schrödinger source is ``2 Im int int f conj(R f) dt dS``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks
from scipy.signal.windows import blackmanharris

from .errors import AccuracyError, ExtractionError, HorizonError, ShapeError
from .operator_core import DiscretizedOperator
from .spectral_data import BoundarySpectralData
from .time_domain import (
    AccuracyWarning,
    BoundarySource,
    Profile,
    ResponseKernel,
    response_direct,
)

FORM_KINDS = ("wave", "schrodinger", "heat", "mass")


class MergedModeWarning(UserWarning):
    """Two frequencies (or rates) are closer than the grid can resolve."""


# ------------------------------------------------------------------ energy
def _stiffness_apply(op: DiscretizedOperator, u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    for b, sl in zip(op.blocks, op.block_slices):
        out[sl] = b.stiffness @ u[sl]
    return out


def energy(op: DiscretizedOperator, kind: str, state, velocity=None) -> float:
    """Discrete energy of a node vector.

    Wave: ``1/2 (|u_t|^2_M + <K u, u>)``.  Schrödinger: ``1/2 <K psi, psi>``.
    Heat: the heat content ``int w dV_g`` (only the rotation-invariant mode
    carries it on the disc).  ``<K u, u>`` is the Gauss-Lobatto quadrature of
    ``int |grad u|_g^2 + q |u|^2 dV_g``.
    """
    u = np.asarray(state)
    if u.shape != (op.n_nodes,):
        raise ShapeError(f"state must have {op.n_nodes} node values")
    if kind == "wave":
        if velocity is None:
            raise ShapeError("wave energy needs the velocity slice")
        v = np.asarray(velocity)
        if v.shape != u.shape:
            raise ShapeError("velocity and state shapes differ")
        return float(0.5 * (np.sum(op.weights * np.abs(v) ** 2) + np.real(np.vdot(u, _stiffness_apply(op, u)))))
    if kind == "schrodinger":
        return float(0.5 * np.real(np.vdot(u, _stiffness_apply(op, u))))
    if kind == "heat":
        total = 0.0
        factor = 1.0 if op.geometry.kind == "interval" else np.sqrt(2 * np.pi)
        for b, sl in zip(op.blocks, op.block_slices):
            if b.mode == 0:
                total += factor * np.sum(b.mass * u[sl])
        return float(np.real(total))
    raise ValueError(f"unknown energy kind {kind!r}")


def mass(op: DiscretizedOperator, state) -> float:
    """``||psi||^2`` in the lumped ``L^2(dV_g)`` norm."""
    u = np.asarray(state)
    return float(np.sum(op.weights * np.abs(u) ** 2))


# ------------------------------------------------------------------- fluxes
def _pair(a: np.ndarray, b: np.ndarray, dt: float) -> complex:
    """Trapezoidal ``int sum_x a conj(b) dt`` on a uniform grid."""
    v = np.sum(a * np.conj(b), axis=1)
    return complex(dt * (v.sum() - 0.5 * (v[0] + v[-1])))


def _response(response, kind, f, dt, T):
    if isinstance(response, ResponseKernel):
        if kind is not None and response.kind != kind:
            raise ValueError(f"response is of kind {response.kind}, expected {kind}")
        resp = response
    elif isinstance(response, DiscretizedOperator):
        if dt is None:
            raise ValueError("dt is required when a flux is measured from an operator")
        T = T if T is not None else _horizon(f, dt)
        resp = response_direct(response, kind, f, T, dt)
    elif callable(response):
        resp = response(f)
    else:
        raise TypeError("response must be a ResponseKernel, an operator or a callable")
    if resp.T + 1e-12 < f.support_end:
        raise HorizonError(f"horizon {resp.T:g} ends before the source support {f.support_end:g}")
    return resp


def _horizon(f: BoundarySource, dt: float) -> float:
    return dt * int(np.ceil(f.support_end / dt) + 1)


def flux(response, f: BoundarySource, kind: str | None = None, *, dt: float | None = None,
         T: float | None = None) -> float:
    """Total energy injected by ``f`` (wave or Schrödinger).

    ``response`` is a :class:`ResponseKernel` for ``f``, an operator (the
    response is then computed directly with step ``dt``) or a callable
    ``f -> ResponseKernel``.
    """
    kind = kind or getattr(response, "kind", None)
    if kind not in ("wave", "schrodinger"):
        raise ValueError("flux is defined for the wave and schrodinger kinds")
    resp = _response(response, kind, f, dt, T)
    return -_pair(resp.samples, f(resp.times, 1), resp.dt).real


def mass_at_infinity(response, f: BoundarySource, *, dt: float | None = None, T: float | None = None) -> float:
    """``lim ||psi^f(t)||^2 = 2 Im int int f conj(R^s f) dt dS``."""
    resp = _response(response, "schrodinger", f, dt, T)
    return 2.0 * _pair(f(resp.times), resp.samples, resp.dt).imag


def _modulated_responder(responder, E0):
    def shifted(f: BoundarySource) -> ResponseKernel:
        base = responder(f.modulated(-E0))
        phase = np.exp(1j * E0 * base.times)[:, None]
        return ResponseKernel(base.kind, base.dt, base.T, phase * base.samples,
                              base.provenance, base.boundary, base.diagnostics)
    return shifted


def shifted_flux(responder, E0: float, f: BoundarySource, *, dt: float | None = None,
                 T: float | None = None) -> float:
    """Schrödinger flux for the potential ``q + E0`` from the response for ``q``.

    Uses ``R_{q+E0} f = e^{i E0 t} R_q(e^{-i E0 t} f)``.  ``responder`` maps
    a source to its Schrödinger :class:`ResponseKernel`; an operator is
    accepted and stepped directly with ``dt``.
    """
    if isinstance(responder, DiscretizedOperator):
        op = responder
        if dt is None:
            raise ValueError("dt is required when stepping an operator")
        horizon = T if T is not None else _horizon(f, dt)
        responder = lambda g: response_direct(op, "schrodinger", g, horizon, dt)  # noqa: E731
    if E0 == 0:
        return flux(responder(f), f, "schrodinger")
    return flux(_modulated_responder(responder, E0)(f), f, "schrodinger")


# ------------------------------------------------------------- polarization
def polarize(quadratic: Callable[[BoundarySource], float], kind: str) -> Callable:
    """Bilinear form from its quadratic diagonal.

    Wave: the complex-bilinear ``Pi_C[f, h]`` obtained from real sources by
    ``(Q(f + h) - Q(f) - Q(h)) / 2`` and extended to complex sources through
    their real and imaginary parts.  Schrödinger: the sesquilinear
    ``Pi[f, h] = Pi_r[f, h] - i Pi_r[i f, h]`` with ``Pi_r`` the real
    polarization.
    """
    def real_form(f, h):
        return 0.5 * (quadratic(f + h) - quadratic(f) - quadratic(h))

    if kind == "wave":
        def form(f: BoundarySource, h: BoundarySource) -> complex:
            if f.is_real and h.is_real:
                return real_form(f, h)
            fr, fi = f.real_part(), f.imag_part()
            hr, hi = h.real_part(), h.imag_part()
            val = complex(real_form(fr, hr) - real_form(fi, hi), real_form(fr, hi) + real_form(fi, hr))
            return val
        return form
    if kind == "schrodinger":
        def form(f: BoundarySource, h: BoundarySource) -> complex:
            return complex(real_form(f, h), -real_form(1j * f, h))
        return form
    raise ValueError(f"cannot polarize kind {kind!r}")


# ----------------------------------------------------------- residue series
def _traced(bsd: BoundarySpectralData, values: np.ndarray) -> np.ndarray:
    """``<B phi_l, v_l>`` per entry for per-entry boundary vectors ``values[l]``."""
    return np.einsum("lb,lb->l", bsd.traces.conj(), values)


def series_bilinear(bsd: BoundarySpectralData, kind: str, f: BoundarySource, h: BoundarySource,
                    tail_tol: float | None = 1e-6) -> complex:
    """Residue-series value of the bilinear form for general sources.

    wave:        ``1/4 sum_l [<f^(k_l), t_l><h^(-k_l), t_l> + <f^(-k_l), t_l><h^(k_l), t_l>]``, ``k_l = sqrt(lambda_l)``
    schrodinger: ``1/2 sum_l lambda_l <f^(-lambda_l), t_l> conj(<h^(-lambda_l), t_l>)``
    mass:        ``sum_l <f^(-lambda_l), t_l> conj(<h^(-lambda_l), t_l>)``
    heat:        ``sum_l <f~(lambda_l), t_l><h~(-lambda_l), t_l>``, the pairing ``int int f R^h h``,
                 valid when ``f`` starts after ``h`` ends.
    """
    lam = bsd.eigenvalues.astype(complex)
    if kind == "wave":
        k = np.sqrt(lam)
        # f^(k) = f~(-i k)
        fp = _traced(bsd, f.laplace(-1j * k))
        fm = _traced(bsd, f.laplace(1j * k))
        hp = _traced(bsd, h.laplace(-1j * k))
        hm = _traced(bsd, h.laplace(1j * k))
        terms = 0.25 * (fp * hm + fm * hp)
    elif kind in ("schrodinger", "mass"):
        # f^(-lambda) = f~(i lambda)
        fa = _traced(bsd, f.laplace(1j * lam))
        ha = _traced(bsd, h.laplace(1j * lam))
        terms = fa * np.conj(ha)
        if kind == "schrodinger":
            terms = 0.5 * lam.real * terms
    elif kind == "heat":
        c = h.support_end
        if f.support[0] < c - 1e-12:
            raise ValueError("the heat pairing series needs f to start after h ends")
        terms = _traced(bsd, f.laplace(lam, offset=c)) * _traced(bsd, h.laplace(-lam, offset=c))
    else:
        raise ValueError(f"unknown series kind {kind!r}")
    _check_tail(terms, tail_tol)
    total = complex(np.sum(terms))
    return total


def _check_tail(terms: np.ndarray, tol: float | None):
    if tol is None or len(terms) < 10:
        return
    mag = np.abs(terms)
    if mag.sum() == 0:
        return
    tail = mag[-max(1, len(mag) // 10):].sum() / mag.sum()
    if tail > tol:
        raise AccuracyError(f"series tail carries {tail:.2e} of the mass; the time profile decays too slowly")


def flux_series(bsd: BoundarySpectralData, kind: str, F, H, chi: Profile, tau, tail_tol: float | None = 1e-6):
    """Residue series for ``f = F chi(t - tau)``, ``h = H chi(t)`` at each ``tau``.

    wave:        ``1/2 sum cos(sqrt(lambda) tau) chi^(sqrt(lambda)) chi^(-sqrt(lambda)) <K F, H>``
                 (``cosh`` growth for negative eigenvalues)
    schrodinger: ``1/2 sum lambda e^{-i lambda tau} |chi^(-lambda)|^2 <K F, H>``
    mass:        ``sum e^{-i lambda tau} |chi^(-lambda)|^2 <K F, H>``
    heat:        ``sum e^{-lambda tau} chi~(lambda) chi~(-lambda) <K F, H>`` for ``tau >= `` support width
    ``<K_l F, H>`` is :meth:`BoundarySpectralData.pairing`.
    """
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    lam = bsd.eigenvalues
    pair = bsd.pairing(np.asarray(F), np.asarray(H))
    mid = 0.5 * (chi.start + chi.end)
    if kind == "wave":
        k = np.sqrt(lam.astype(complex))
        weight = chi.laplace(-1j * k, mid) * chi.laplace(1j * k, mid) * pair
        terms = 0.5 * np.cos(np.multiply.outer(taus, k)) * weight
    elif kind in ("schrodinger", "mass"):
        weight = np.abs(chi.fourier(-lam)) ** 2 * pair
        if kind == "schrodinger":
            weight = 0.5 * lam * weight
        terms = np.exp(-1j * np.multiply.outer(taus, lam)) * weight
    elif kind == "heat":
        width = chi.end - chi.start
        if np.any(taus < width - 1e-12):
            warnings.warn("heat series identity needs tau at least the profile width", AccuracyWarning,
                          stacklevel=2)
        lo = chi.laplace(-lam, chi.end)  # int e^{lambda (t - end)} chi
        terms = np.empty((len(taus), len(lam)), dtype=complex)
        for i, t in enumerate(taus):
            terms[i] = chi.laplace(lam, chi.end - t) * lo * pair
    else:
        raise ValueError(f"unknown series kind {kind!r}")
    for row in terms[:: max(1, len(taus) // 8)]:
        _check_tail(row, tail_tol)
    out = terms.sum(axis=1)
    if kind in ("wave", "heat"):
        out = out.real
    return out if np.ndim(tau) else out[0]


# ---------------------------------------------------------------- forms
@dataclass(frozen=True)
class FluxForm:
    """Bilinear boundary form with its backing.

    ``evaluator(f, h)`` returns ``Pi_C[f, h]`` (wave), the sesquilinear
    ``Pi[f, h]`` (Schrödinger), the mass form, or ``int int f R^h h``
    (heat pairing).
    """

    kind: str
    evaluator: Callable
    backing: str

    def __call__(self, f: BoundarySource, h: BoundarySource):
        return self.evaluator(f, h)

    def quadratic(self, f: BoundarySource) -> float:
        return float(np.real(self.evaluator(f, f)))

    @classmethod
    def from_responder(cls, kind: str, responder: Callable[[BoundarySource], ResponseKernel],
                       backing: str = "direct-solver") -> "FluxForm":
        if kind in ("wave", "schrodinger"):
            quad = lambda f: flux(responder(f), f, kind)  # noqa: E731
            return cls(kind, polarize(quad, kind), backing)
        if kind == "mass":
            quad = lambda f: mass_at_infinity(responder(f), f)  # noqa: E731
            return cls(kind, polarize(quad, "schrodinger"), backing)
        if kind == "heat":
            def heat_pair(f, h):
                resp = responder(h)
                if resp.T + 1e-12 < f.support_end:
                    raise HorizonError("horizon ends before the source support")
                return complex(_pair(f(resp.times), np.conj(resp.samples), resp.dt))
            return cls(kind, heat_pair, backing)
        raise ValueError(f"unknown form kind {kind!r}")

    @classmethod
    def from_series(cls, bsd: BoundarySpectralData, kind: str, tail_tol: float | None = 1e-6) -> "FluxForm":
        return cls(kind, lambda f, h: series_bilinear(bsd, kind, f, h, tail_tol), "spectral-series")


# ----------------------------------------------------------- mode recovery
@dataclass(frozen=True)
class ModeExtraction:
    """Recovered ``(lambda_l, <K_l F, H>)`` pairs, sorted by ``lambda``."""

    method: str
    eigenvalues: np.ndarray
    pairings: np.ndarray
    amplitudes: np.ndarray
    residuals: np.ndarray
    merged: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def modes(self) -> list[dict]:
        return [{"lambda": float(l), "pairing": complex(p), "amplitude": complex(a), "residual": float(r),
                 "merged": bool(m)}
                for l, p, a, r, m in zip(self.eigenvalues, self.pairings, self.amplitudes, self.residuals,
                                         self.merged)]

    def to_json(self) -> dict:
        rows = []
        for m in self.modes:
            rows.append({"lambda": m["lambda"], "pairing_re": m["pairing"].real, "pairing_im": m["pairing"].imag,
                         "amplitude_re": m["amplitude"].real, "amplitude_im": m["amplitude"].imag,
                         "residual": m["residual"], "merged": m["merged"]})
        return {"method": self.method, "modes": rows, "diagnostics": self.diagnostics}


def _uniform(taus):
    t = np.asarray(taus, dtype=float)
    if t.ndim != 1 or len(t) < 16:
        raise ShapeError("need at least 16 sample points")
    d = np.diff(t)
    if np.any(d <= 0) or np.ptp(d) > 1e-6 * d.mean():
        raise ShapeError("sample points must be uniformly spaced")
    return t, float(d.mean())


PEEL_TRUST = 1e-6
PEEL_STABILITY = 1e-4
SIDELOBE = 1e-4  # Blackman-Harris sidelobes sit near 1e-4.5 of the main lobe


def _spectral_peaks(values, dt, floor, two_sided):
    """Peak frequencies of the windowed spectrum above ``floor`` and the sidelobe level."""
    n = len(values)
    win = blackmanharris(n)
    pad = 16 * int(2 ** np.ceil(np.log2(n)))
    spec = np.fft.fft(values * win, pad) / win.sum()
    freqs = 2 * np.pi * np.fft.fftfreq(pad, dt)
    mag = np.abs(spec)
    keep = np.ones(pad, dtype=bool) if two_sided else freqs >= 0
    order = np.argsort(freqs[keep])
    fk, mk = freqs[keep][order], mag[keep][order]
    idx, _ = find_peaks(mk, height=max(floor, SIDELOBE * mk.max()))
    out = []
    for i in idx:
        if 0 < i < len(mk) - 1:
            a, b, c = np.log(mk[i - 1:i + 2] + 1e-300)
            shift = 0.5 * (a - c) / (a - 2 * b + c) if (a - 2 * b + c) != 0 else 0.0
            out.append(fk[i] + shift * (fk[1] - fk[0]))
        else:
            out.append(fk[i])
    return np.array(out), float(mk.max(initial=0.0))


def _design(t, w, basis):
    return basis(np.multiply.outer(t, w))


def _vp_fit(t, values, freqs, basis, dbasis):
    """Variable-projection least squares over the frequencies ``freqs``."""
    if len(freqs) == 0:
        return np.zeros(0), np.zeros(0), values
    cplx = np.iscomplexobj(values) or basis is _schrodinger_phase

    def stack(r):
        return np.concatenate([r.real, r.imag], axis=0) if cplx else r

    def coef_of(w):
        coef, *_ = np.linalg.lstsq(_design(t, w, basis), values, rcond=None)
        return coef

    def resid(w):
        return stack(_design(t, w, basis) @ coef_of(w) - values)

    def jac(w):
        # Kaufman approximation: coefficients held fixed
        return stack(t[:, None] * dbasis(np.multiply.outer(t, w)) * coef_of(w)[None, :])

    sol = least_squares(resid, freqs, jac=jac, x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=100)
    w = sol.x
    coef = coef_of(w)
    return w, coef, values - _design(t, w, basis) @ coef


def _clean(t, g, dt, basis, dbasis, two_sided, rel_floor, resolution, rounds=8):
    """Alternate peak picking on the residual spectrum with joint refinement."""
    sign = -1.0 if basis is _schrodinger_phase else 1.0
    freqs = np.zeros(0)
    res = g
    top = None
    for _ in range(rounds):
        peaks, level = _spectral_peaks(res, dt, 0.0 if top is None else rel_floor * top, two_sided)
        top = level if top is None else top
        if level < rel_floor * top:
            break
        peaks = sign * peaks
        if not two_sided:
            peaks = peaks[peaks > 0.5 * resolution]
        fresh = [p for p in peaks if len(freqs) == 0 or np.min(np.abs(freqs - p)) > 0.5 * resolution]
        if not fresh:
            break
        freqs = np.sort(np.concatenate([freqs, fresh]))
        freqs, coef, res = _vp_fit(t, g, freqs, basis, dbasis)
    if len(freqs) == 0:
        return freqs, np.zeros(0), g
    return freqs, coef, res


def _per_mode_residual(taus, residual, freqs, coef, basis):
    out = []
    for w, c in zip(freqs, coef):
        proj = np.vdot(basis(w * taus), residual) / np.vdot(basis(w * taus), basis(w * taus))
        out.append(float(abs(proj) / max(abs(c), 1e-300)))
    return np.array(out)


def _schrodinger_phase(x):
    return np.exp(-1j * x)


def extract_modes(values, taus, kind: str, chi: Profile | None = None, rel_floor: float = 1e-7,
                  max_modes: int | None = None, expect_positive: bool = False,
                  negative_tol: float = 1e-3) -> ModeExtraction:
    """Recover eigenvalues and ``<K_l F, H>`` from series or measured values ``g(tau)``.

    wave: ``g = 1/2 sum cos(sqrt(lambda) tau) A_l`` with ``A_l = |chi^|^2 <K F, H>``.
    Windowed FFT peaks, parabolic refinement, then joint least squares.
    Growing ``cosh`` components (negative eigenvalues) are peeled first.
    schrodinger / mass: ``g = sum c_l e^{-i lambda tau}`` with ``c_l`` equal to
    ``1/2 lambda |chi^|^2 <K F, H>`` or ``|chi^|^2 <K F, H>``.
    heat: ``g = sum e^{-lambda tau} chi~(lambda) chi~(-lambda) <K F, H>``, by
    sequential exponential peeling on late windows and a joint refinement.
    With ``chi`` given the profile factor is divided out of each amplitude.
    """
    t, dt = _uniform(taus)
    g = np.asarray(values)
    if g.shape != t.shape:
        raise ShapeError("values and taus differ in length")
    span = t[-1] - t[0]
    resolution = 2 * np.pi / span
    if kind == "heat":
        return _extract_heat(t, g.real, chi, rel_floor, max_modes, expect_positive, negative_tol)
    diagnostics = {"resolution": resolution, "step": dt, "window": "blackman-harris", "rel_floor": rel_floor}
    neg_rates, neg_amps = [], []
    if kind == "wave":
        g = g.real.astype(float)
        g, neg_rates, neg_amps = _peel_growth(t, g)
        basis, dbasis, two_sided = np.cos, lambda x: -np.sin(x), False
    elif kind in ("schrodinger", "mass"):
        g = g.astype(complex)
        basis, dbasis, two_sided = _schrodinger_phase, lambda x: -1j * np.exp(-1j * x), True
    else:
        raise ValueError(f"unknown extraction kind {kind!r}")
    w, coef, res = _clean(t, g, dt, basis, dbasis, two_sided, rel_floor, resolution)
    order = np.argsort(w)
    w, coef = w[order], coef[order]
    if max_modes is not None:
        w, coef = w[:max_modes], coef[:max_modes]
    if np.any(np.diff(w) < 2 * resolution):
        warnings.warn("detected frequencies closer than twice the grid resolution", MergedModeWarning, stacklevel=2)
    per = _per_mode_residual(t, res, w, coef, basis)
    merged = per > 1e-3
    if np.any(merged):
        warnings.warn("some modes leave structured residue; they may be merged", MergedModeWarning, stacklevel=2)
    if kind == "wave":
        lam = w ** 2
        amps = 2.0 * coef  # g = 1/2 sum A cos
        lam = np.concatenate([-np.asarray(neg_rates) ** 2, lam])
        amps = np.concatenate([2.0 * np.asarray(neg_amps), amps])
        per = np.concatenate([np.zeros(len(neg_rates)), per])
        merged = np.concatenate([np.zeros(len(neg_rates), dtype=bool), merged])
        method = "fourier-peaks"
    else:
        lam = w
        amps = coef
        method = "fourier-peaks"
    pair = _divide_profile(kind, lam, amps, chi)
    order = np.argsort(lam)
    out = ModeExtraction(method, lam[order], pair[order], amps[order], per[order], merged[order],
                         {**diagnostics, "rms_residual": float(np.sqrt(np.mean(np.abs(res) ** 2)))})
    _check_sign(out, expect_positive, negative_tol)
    return out


def _divide_profile(kind, lam, amps, chi):
    amps = np.asarray(amps, dtype=complex)
    if chi is None:
        return amps
    lam = np.asarray(lam, dtype=float)
    if kind == "wave":
        k = np.sqrt(lam.astype(complex))
        mid = 0.5 * (chi.start + chi.end)
        fac = chi.laplace(-1j * k, mid) * chi.laplace(1j * k, mid)
    elif kind in ("schrodinger", "mass"):
        fac = np.abs(chi.fourier(-lam)) ** 2
        if kind == "schrodinger":
            fac = 0.5 * lam * fac
    else:
        fac = chi.laplace(lam, chi.end) * chi.laplace(-lam, chi.end)
    return amps / fac


def _check_sign(out: ModeExtraction, expect_positive: bool, tol: float):
    if not expect_positive or len(out) == 0:
        return
    p = out.pairings.real
    if np.any(p < -tol * np.abs(p).max()):
        raise ExtractionError("negative amplitude where a positive kernel value is expected")


def _peel_growth(t, g, max_terms: int = 4):
    """Remove ``A cosh(s tau)`` components that dominate the late samples."""
    rates, amps = [], []
    n = len(t)
    for _ in range(max_terms):
        late = slice(int(0.8 * n), n)
        early = np.abs(g[: n // 5]).max(initial=0.0)
        if np.abs(g[late]).max(initial=0.0) < 10.0 * max(early, 1e-300):
            break
        y = np.log(np.abs(g[late]) + 1e-300)
        s, _ = np.polyfit(t[late], y, 1)
        if s <= 0:
            break
        # amplitude by least squares against cosh(s tau)
        A = np.cosh(s * t)
        a = float(np.dot(A[late], g[late]) / np.dot(A[late], A[late]))
        g = g - 0.5 * a * A
        rates.append(s)
        amps.append(0.5 * a)
    return g, rates, amps


def _refine_rates(t, g, rates):
    """Joint least squares in relative residual; returns rates, amplitudes, residual."""
    weight = 1.0 / np.maximum(np.abs(g), 1e-300)

    def amps_of(lam):
        A = np.exp(-np.multiply.outer(t, lam))
        coef, *_ = np.linalg.lstsq(A * weight[:, None], g * weight, rcond=None)
        return A, coef

    def resid(lam):
        A, coef = amps_of(lam)
        return (A @ coef - g) * weight

    def jac(lam):
        A, coef = amps_of(lam)
        return -(t[:, None] * A * coef[None, :]) * weight[:, None]

    lo = min(0.0, float(np.min(rates)) - 1.0)
    sol = least_squares(resid, rates, jac=jac, bounds=(lo, np.inf), x_scale="jac", xtol=1e-14, ftol=1e-14,
                        gtol=1e-14, max_nfev=200)
    A, coef = amps_of(sol.x)
    return sol.x, coef, g - A @ coef


def _extract_heat(t, g, chi, rel_floor, max_modes, expect_positive, negative_tol) -> ModeExtraction:
    """Peel the slowest decay from a late window, refine jointly, repeat on earlier windows."""
    scale = np.abs(g).max()
    rates, amps, conds = np.zeros(0), np.zeros(0), []
    r = g.astype(float).copy()
    fit_from = len(t) - 1
    limit = max_modes or 12
    while len(rates) < limit:
        mag = np.abs(r)
        # the remainder is trusted only well above the error of earlier subtractions
        ok = (mag > PEEL_TRUST * np.abs(g)) & (mag > rel_floor * scale)
        idx = np.nonzero(ok)[0]
        if len(idx) < 8:
            break
        first = idx[0] + (2 * (idx[-1] - idx[0])) // 3
        win = np.arange(first, idx[-1] + 1)
        win = win[ok[win]]
        if len(win) < 5:
            break
        G = np.column_stack([np.ones(len(win)), t[win]])
        conds.append(float(np.linalg.cond(G)))
        (c0, c1), *_ = np.linalg.lstsq(G, np.log(mag[win]), rcond=None)
        lam = -c1
        if not np.isfinite(lam) or (len(rates) and lam <= rates.max()):
            break
        fit_from = min(fit_from, int(win[0]))
        cut = slice(fit_from, None)
        try:
            new_rates, new_amps, _ = _refine_rates(t[cut], g[cut], np.append(rates, lam))
        except (np.linalg.LinAlgError, ValueError):
            break
        if np.any(np.diff(np.sort(new_rates)) <= 0) or not np.all(np.isfinite(new_amps)):
            break
        # a new mode that drags the settled rates is fitting unresolved structure
        if len(rates) and np.max(np.abs(new_rates[:-1] - rates) / rates) > PEEL_STABILITY:
            break
        rates, amps = new_rates, new_amps
        r = g - _exp_model(t, rates, amps)
    res = r
    order = np.argsort(rates)
    rates, coef = rates[order], amps[order]
    weight = 1.0 / np.maximum(np.abs(g), 1e-300)
    cut = slice(fit_from, None)
    per = np.array([float(np.abs(np.dot(np.exp(-l * t[cut]), (res * weight ** 2)[cut])) /
                          max(abs(c) * np.dot(np.exp(-2 * l * t[cut]), (weight ** 2)[cut]), 1e-300))
                    for l, c in zip(rates, coef)])
    merged = np.zeros(len(rates), dtype=bool)
    if len(rates) > 1 and np.any(np.diff(rates) < 1e-3 * rates[1:]):
        merged[1:] |= np.diff(rates) < 1e-3 * rates[1:]
        warnings.warn("decay rates too close to separate", MergedModeWarning, stacklevel=3)
    pair = _divide_profile("heat", rates, coef, chi)
    rel = (res * weight)[cut]
    out = ModeExtraction("exponential-peeling", rates, pair, coef.astype(complex), per, merged,
                         {"condition": conds, "fit_from": float(t[fit_from]),
                          "rms_relative_residual": float(np.sqrt(np.mean(rel ** 2)))})
    _check_sign(out, expect_positive, negative_tol)
    return out


def _exp_model(t, rates, amps):
    return np.exp(-np.multiply.outer(t, rates)) @ amps
