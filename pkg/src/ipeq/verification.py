"""Verification suites: every transcoding arrow checked against a direct computation.

Each check returns a :class:`Check` with its residual and tolerance.  The
suites are what ``ipeq verify`` runs; the model is an operator or one of the
reference names ``"M1"`` (interval, 400 nodes) and ``"M2"`` (disc, 200
radial nodes, ``|k| <= 4``).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .elliptic_dtn import bsd_from_dtn, dtn_direct, dtn_from_bsd, dtn_sampler
from .energy_flux import energy, extract_modes, flux, flux_series, mass, mass_at_infinity, polarize
from .operator_core import DiscretizedOperator, eigendecompose, eigenvalues, geometry_weights
from .spectral_data import bsd_equivalent, compute_bsd
from .time_domain import (
    BoundarySource,
    PolynomialBump,
    evolve,
    response_direct,
    response_from_dtn,
)

SUITES = ("theorem1", "appendix1", "appendix2", "gauge")


@dataclass
class Check:
    name: str
    residual: float
    tol: float
    passed: bool
    seconds: float = 0.0
    note: str = ""
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.note})" if self.note else ""
        return f"{verdict}  {self.name}: residual {self.residual:.3g} (tol {self.tol:.3g}){extra}"


def _check(name, residual, tol, t0, note="", **detail) -> Check:
    residual = float(residual)
    return Check(name, residual, tol, bool(residual <= tol), time.perf_counter() - t0, note, detail)


def _model(model):
    if isinstance(model, DiscretizedOperator):
        return model
    from .persistence import operator_from_spec

    return operator_from_spec(model)


def _slot_vectors(op):
    nb = op.n_boundary
    F = np.zeros(nb)
    H = np.zeros(nb)
    if op.geometry.kind == "interval":
        F[:] = [1.0, 0.5]
        H[:] = [1.0, -0.3]
    else:
        K = op.geometry.mode_cutoff
        F[K], F[K + 1], F[K - 1] = 1.0, 0.5, 0.5
        H[K], H[K + 1], H[K - 1] = 1.0, -0.3, -0.3
    return F, H


# ---------------------------------------------------------------- transcoding chain
def check_bsd_to_dtn(op, tau0=40.0, count=200, z=0.0, tol=2e-2) -> Check:
    t0 = time.perf_counter()
    bsd = compute_bsd(op, count)
    rec = dtn_from_bsd(bsd, geometry_weights(op), z, tau0)
    direct = dtn_direct(op, z)
    err = np.abs(rec.matrix - direct.matrix)
    if op.geometry.kind == "disc":
        # the two-term anchor is exact to O(1/tau0) only for the k = 0 channel
        K = op.geometry.mode_cutoff
        note = "k=0 channel; other channels against the reported budget"
        ok_budget = bool(np.all(np.diag(err) <= 2.0 * rec.budget["total"] + tol))
        return _check("i->ii dtn_from_bsd vs direct", err[K, K], tol, t0, note, budget=rec.budget,
                      full_error=float(err.max()), within_budget=ok_budget)
    return _check("i->ii dtn_from_bsd vs direct", err.max(), tol, t0, budget=rec.budget)


def check_dtn_to_bsd(op, a=None, b=None, count=5, tol=1e-6) -> Check:
    t0 = time.perf_counter()
    ref = compute_bsd(op, 60)
    lam = ref.eigenvalues
    if a is None:
        a = 0.5 * lam[0] if lam[0] > 0 else lam[0] - 1.0
    if b is None:
        # enough range for ``count`` distinct clusters
        distinct = np.unique(np.round(lam, 6))
        b = 0.5 * (distinct[count - 1] + distinct[count])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        got = bsd_from_dtn(dtn_sampler(op), a, b, boundary=op.geometry.boundary_descriptor())
    n = len(got)
    rep = bsd_equivalent(ref.truncate(n), got, tol=tol)
    lam_err = float(np.max(np.abs(got.eigenvalues - lam[:n]) / np.abs(lam[:n]))) if n else np.inf
    kres = max((k["kernel_residual"] for k in rep.kernel_residuals), default=np.inf)
    return _check("ii->i bsd_from_dtn round trip", max(lam_err, kres), tol, t0,
                  f"{n} eigenvalues in [{a:.3g}, {b:.3g}]", recovered=n)


def check_response_synthesis(op, kind, T=4.0, dt=None, tol=None) -> Check:
    t0 = time.perf_counter()
    tol = tol or {"heat": 1e-4, "schrodinger": 1e-3, "wave": 1e-3}[kind]
    # leapfrog error is O(dt^2) and dominates the comparison for the wave kind
    dt = dt or {"wave": 1.25e-4, "heat": 1e-3, "schrodinger": 2.5e-4}[kind]
    F, _ = _slot_vectors(op)
    f = BoundarySource.separable(F, PolynomialBump(0.0, 0.5))
    direct = response_direct(op, kind, f, T, dt)
    synth = response_from_dtn(dtn_sampler(op), kind, f, T, dt, lowest_eigenvalue=float(eigenvalues(op)[0]))
    err = np.abs(direct.samples - synth.samples).max()
    return _check(f"ii->{ {'wave': 'iii', 'heat': 'v', 'schrodinger': 'vi'}[kind]} {kind} response synthesis",
                  err, tol, t0, diagnostics=synth.diagnostics)


def check_flux_energy(op, n_random=100, seed=0, tol=1e-3) -> list[Check]:
    t0 = time.perf_counter()
    F, _ = _slot_vectors(op)
    f = BoundarySource.separable(F, PolynomialBump(0.0, 0.5))
    dt, T = 5e-4, 1.0
    tr = evolve(op, "wave", f, T, dt)
    E = energy(op, "wave", tr.states[-1], tr.velocities[-1])
    Pi = flux(op, f, "wave", dt=dt, T=T)
    wave = _check("iii->iv wave flux vs energy", abs(Pi - E) / abs(E), tol, t0)
    t0 = time.perf_counter()
    fs = f * (1.0 + 0.5j)
    trs = evolve(op, "schrodinger", fs, T, 2.5e-4)
    psi = trs.states[-1]
    m_meas = mass_at_infinity(op, fs, dt=2.5e-4, T=T)
    m_vol = mass(op, psi)
    e_meas = flux(op, fs, "schrodinger", dt=2.5e-4, T=T)
    e_vol = energy(op, "schrodinger", psi)
    res = max(abs(m_meas - m_vol) / m_vol, abs(e_meas - e_vol) / e_vol)
    schr = _check("vi->vii flux and mass at infinity vs volumetric", res, tol, t0)
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_random):
        a = rng.uniform(0.0, 0.6)
        w = rng.uniform(0.2, 0.6)
        src = BoundarySource.separable(rng.normal(size=op.n_boundary), PolynomialBump(a, a + w, int(rng.integers(3, 8))))
        worst = min(worst, flux(op, src, "wave", dt=1e-3, T=np.ceil((a + w) / 1e-3 + 1) * 1e-3))
    pos = _check("iv wave flux nonnegative on random sources", max(0.0, -worst), 0.0, t0,
                 f"min flux {worst:.3g} over {n_random} sources")
    return [wave, schr, pos]


def _wave_dataset(op, bsd, F, H, chi, taus):
    return flux_series(bsd, "wave", F, H, chi, taus)


def check_wave_extraction(op, count=5, tol_lam=1e-3, tol_pair=1e-2, tol_series=1e-3) -> list[Check]:
    t0 = time.perf_counter()
    F, H = _slot_vectors(op)
    chi = PolynomialBump(0.0, 0.5)
    bsd = compute_bsd(op, 60 * len(op.blocks))
    taus = np.round(np.arange(0, 10001) * 0.02, 12)
    g = _wave_dataset(op, bsd, F, H, chi, taus)
    ex = extract_modes(g, taus, "wave", chi=chi)
    lam, pair = _cluster_sums(bsd, F, H)
    k_ref = np.sqrt(lam[:count])
    got_k = np.sqrt(ex.eigenvalues)
    lam_err, pair_err = 0.0, 0.0
    for k, p in zip(k_ref, pair[:count]):
        i = int(np.argmin(np.abs(got_k - k)))
        lam_err = max(lam_err, abs(got_k[i] - k) / k)
        pair_err = max(pair_err, abs(ex.pairings[i] - p) / abs(p))
    c1 = _check("iv->i wave mode extraction: sqrt(lambda)", lam_err, tol_lam, t0)
    c2 = _check("iv->i wave mode extraction: pairings", pair_err, tol_pair, t0)
    t0 = time.perf_counter()
    # measured polarized flux at a few delays against the series
    dt = 2.5e-4
    quad = lambda s: flux(op, s, "wave", dt=dt, T=dt * np.ceil(s.support_end / dt + 1))  # noqa: E731
    form = polarize(quad, "wave")
    hs = BoundarySource.separable(H, chi)
    worst = 0.0
    for tau in (0.3, 1.3, 2.0):
        fs = BoundarySource.separable(F, chi, delay=tau)
        meas = np.real(form(fs, hs))
        ser = flux_series(bsd, "wave", F, H, chi, tau)
        # relative to the Cauchy-Schwarz scale; the form itself can nearly vanish
        worst = max(worst, abs(meas - ser) / np.sqrt(quad(fs) * quad(hs)))
    c3 = _check("iv wave flux_series vs measured polarized flux", worst, tol_series, t0)
    return [c1, c2, c3]


def _cluster_sums(bsd, F, H):
    """Distinct eigenvalues with ``<K F, H>`` summed over each cluster."""
    out_l, out_p = [], []
    pair = bsd.pairing(F, H)
    for idx in bsd.clusters():
        out_l.append(float(bsd.eigenvalues[idx].mean()))
        out_p.append(complex(pair[idx].sum()))
    lam, p = np.array(out_l), np.array(out_p)
    keep = np.abs(p) > 1e-12 * np.abs(p).max()
    return lam[keep], p[keep]


def check_heat_extraction(op, tol_lam=1e-3, tol_pair=1e-2) -> Check:
    t0 = time.perf_counter()
    F, H = _slot_vectors(op)
    chi = PolynomialBump(0.0, 0.05)
    bsd = compute_bsd(op, 60)
    # late enough that lambda_1 has decayed by e^-18
    end = 18.0 / float(bsd.eigenvalues[0])
    taus = np.linspace(0.05, end, 2001)
    g = flux_series(bsd, "heat", F, H, chi, taus)
    ex = extract_modes(g, taus, "heat", chi=chi)
    lam, pair = _cluster_sums(bsd, F, H)
    e1 = abs(ex.eigenvalues[0] - lam[0]) / lam[0]
    e2 = abs(ex.eigenvalues[1] - lam[1]) / lam[1] if len(ex) > 1 else np.inf
    ep = abs(ex.pairings[0] - pair[0]) / abs(pair[0])
    return _check("v->i heat exponential peeling", max(e1 / tol_lam, e2 / tol_lam, ep / tol_pair) * tol_lam,
                  tol_lam, t0, f"lambda1 {e1:.2g}, lambda2 {e2:.2g}, pairing {ep:.2g}")


def _schrodinger_modes(bsd, F, H, kind, shift=0.0):
    chi = PolynomialBump(0.0, 0.1)
    taus = np.round(np.arange(0, 20001) * 0.005, 12)
    g = flux_series(bsd, kind, F, H, chi, taus)
    return extract_modes(g, taus, kind, chi=chi)


def check_schrodinger_extraction(op, count=4, tol=1e-3) -> list[Check]:
    """vii->i, including the zero-mode caveat on the shifted operator."""
    t0 = time.perf_counter()
    F, H = _slot_vectors(op)
    bsd = compute_bsd(op, 60)
    lam, _ = _cluster_sums(bsd, F, H)
    ex = _schrodinger_modes(bsd, F, H, "schrodinger")
    err = max(np.min(np.abs(ex.eigenvalues - l)) / abs(l) for l in lam[:count])
    out = [_check("vii->i schrodinger mode extraction", err, tol, t0)]
    t0 = time.perf_counter()
    zero = op.shifted(-float(eigenvalues(op)[0]))
    zb = compute_bsd(zero, 60)
    zl, _ = _cluster_sums(zb, F, H)
    ex0 = _schrodinger_modes(zb, F, H, "schrodinger")
    missed = bool(np.all(np.abs(ex0.eigenvalues) > 1e-6))
    others = max(np.min(np.abs(ex0.eigenvalues - l)) / abs(l) for l in zl[1:count])
    exm = _schrodinger_modes(zb, F, H, "mass")
    found_mass = float(np.min(np.abs(exm.eigenvalues)))
    ok = missed and others < tol and found_mass < 1e-6
    out.append(Check("vii->i zero mode: excluded from flux, recovered from mass at infinity",
                     max(others, found_mass), tol, ok, time.perf_counter() - t0,
                     "pass with documented zero-mode exclusion" if ok else "zero-mode caveat not reproduced",
                     {"zero_missed_by_flux": missed, "mass_route_zero": found_mass}))
    return out


def suite_theorem1(model="M1") -> list[Check]:
    op = _model(model)
    checks = [check_bsd_to_dtn(op), check_dtn_to_bsd(op)]
    for kind in ("heat", "schrodinger", "wave"):
        checks.append(check_response_synthesis(op, kind))
    checks += check_flux_energy(op)
    checks += check_wave_extraction(op)
    checks.append(check_heat_extraction(op))
    checks += check_schrodinger_extraction(op)
    return checks


# ---------------------------------------------------------------- DtN asymptotics
def suite_appendix1(model="M2") -> list[Check]:
    from .symbol_calculus import estimate_rho_H

    op = _model(model)
    checks = []
    t0 = time.perf_counter()
    w = geometry_weights(op)
    sampler = dtn_sampler(op)
    est = estimate_rho_H(sampler)
    checks.append(_check("rho from DtN asymptotics", np.abs(est.rho - 1.0).max(), 1e-3, t0))
    if op.geometry.kind == "disc":
        K = op.geometry.mode_cutoff
        checks.append(_check("mean curvature from DtN asymptotics", abs(est.mean_curvature[K] - w.mean_curvature[K]),
                             5e-2, t0))
        rem = [abs(sampler(-t * t).matrix[K + 1, K + 1] - (-t * w.rho[K + 1] - 0.5 * w.rho[K + 1] * w.mean_curvature[K + 1]))
               for t in (20.0, 40.0)]
        slope = np.log(rem[1] / rem[0]) / np.log(2.0)
        checks.append(Check("l=1 remainder log-slope over tau in {20, 40}", float(slope), -0.7, bool(slope <= -0.7),
                            time.perf_counter() - t0))
    else:
        checks.append(_check("mean curvature from DtN asymptotics", np.abs(est.mean_curvature).max(), 1e-3, t0))
        rem = np.abs(np.diag(sampler(-100.0).matrix) - (-10.0)).max()
        checks.append(_check("flat remainder at tau = 10", rem, 1e-7, t0))
    return checks


# ---------------------------------------------------------------- finite-time forms
def suite_appendix2(model="M1", alpha=3.0, T=1.5, dt=1e-3, pairs=20, seed=0) -> list[Check]:
    from .finite_time_forms import bt_from_flux, flux_oracle, form_BT, form_PiT, verify_identities
    from .time_domain import Monomial

    op = _model(model)
    F, H = _slot_vectors(op)
    t0 = time.perf_counter()
    rep = verify_identities(op, F, H, T, alpha, dt)
    checks = [_check("antiderivative identity", rep["antiderivative"]["residual"], 1e-5, t0),
              _check("monomial identity (two routes)", rep["monomial"]["residual"], 1e-6, t0),
              _check("boundary-term sum identity", rep["boundary_sum"]["residual"], 1e-5, t0),
              _check("symmetrized-kernel identity", rep["kernel_symmetry"]["residual"], 1e-6, t0)]
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    oracle = flux_oracle(op, T, dt)
    worst = 0.0
    for _ in range(pairs):
        srcs = []
        for _ in range(2):
            a = rng.uniform(0.0, 1.5 * T)
            srcs.append(BoundarySource.separable(rng.normal(size=op.n_boundary), Monomial(alpha))
                        + BoundarySource.separable(rng.normal(size=op.n_boundary), PolynomialBump(a, a + rng.uniform(0.2, 1.0), 4)))
        ref = form_BT(op, srcs[0], srcs[1], T, dt)
        got = bt_from_flux(oracle, srcs[0], srcs[1], T, alpha)
        # B^T vanishes for equal time profiles; judge against the energy scale
        scale = np.sqrt(abs(form_PiT(op, srcs[0], srcs[0], T, dt) * form_PiT(op, srcs[1], srcs[1], T, dt)))
        worst = max(worst, abs(got - ref) / max(abs(ref), scale, 1e-300))
    checks.append(_check(f"flux-only B^T on {pairs} random pairs", worst, 1e-5, t0))
    return checks


# -------------------------------------------------------------------- gauge
GAUGE_Z = (-3.0, -50.0, 2.5 + 1.0j, -0.5 + 5.0j)


def suite_gauge(model="M1") -> list[Check]:
    from .gauge_transform import GaugePair, apply_gauge, boundary_shift, build_conductivity_operator, dtn_gauge_residual

    base = _model(model)
    geo = base.geometry
    t0 = time.perf_counter()
    if geo.kind == "interval":
        op = build_conductivity_operator(geo, lambda x: 1 + x**2 / 2, lambda x: 0.5 * np.cos(2 * x))
        pair = GaugePair.from_map(lambda x: x + 0.1 * np.sin(np.pi * x) * x * (1 - x))
        other = build_conductivity_operator(geo, lambda x: 1 + x / 3, lambda x: 0.5 * np.cos(2 * x))
    else:
        op = build_conductivity_operator(geo, lambda r: 1 + r**2 / 2)
        pair = GaugePair.from_map(lambda r: 1 + 0.3 * r**2 * (1 - r**2) ** 2, kind="disc")
        other = build_conductivity_operator(geo, lambda r: 1 + r / 3)
    op2 = apply_gauge(op, pair)
    rep = bsd_equivalent(compute_bsd(op, 20), compute_bsd(op2, 20))
    kres = max(k["kernel_residual"] for k in rep.kernel_residuals)
    checks = [_check("gauge pair preserves boundary spectral data", max(rep.eigenvalue_residual, kres), 1e-6, t0)]
    t0 = time.perf_counter()
    ge = dtn_gauge_residual(dtn_sampler(op), dtn_sampler(op2), GAUGE_Z)
    sigma = boundary_shift(op, pair)
    checks.append(_check("sigma = B kappa recovered", np.abs(ge.sigma - sigma).max(), 1e-5, t0))
    checks.append(_check("DtN shift is z-independent", ge.residual, 1e-6, t0))
    t0 = time.perf_counter()
    bad = dtn_gauge_residual(dtn_sampler(op), dtn_sampler(other), GAUGE_Z)
    checks.append(Check("non-gauge-related pair rejected", bad.residual, 1e-6, not bad.equivalent,
                        time.perf_counter() - t0, "residual must exceed tol"))
    return checks


def run_suite(name: str, models=None) -> dict:
    """Run a suite on each model; returns a JSON-ready report."""
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    fn = {"theorem1": suite_theorem1, "appendix1": suite_appendix1, "appendix2": suite_appendix2,
          "gauge": suite_gauge}[name]
    if models is None:
        models = {"theorem1": ("M1", "M2"), "appendix1": ("M1", "M2"), "appendix2": ("M1",),
                  "gauge": ("M1", "M2")}[name]
    t0 = time.perf_counter()
    results = {}
    for m in models:
        label = m if isinstance(m, str) else "custom"
        results[label] = fn(m)
    passed = all(c.passed for cs in results.values() for c in cs)
    return {"suite": name, "passed": passed, "seconds": time.perf_counter() - t0,
            "models": {k: [asdict(c) for c in cs] for k, cs in results.items()},
            "lines": {k: [c.line() for c in cs] for k, cs in results.items()}}
