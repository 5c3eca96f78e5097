"""``ipeq`` command line: build models, generate data, transcode, verify, emit plot data.

Every command writes JSON or CSV plus ``<output>.manifest.json``.  Options
may come from ``--config file.json`` (keys are the long option names with
dashes as underscores); explicit flags win.

Exit codes: 0 success, 1 verification failure, 2 usage or data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import persistence as io
from .elliptic_dtn import EPS_POLE, DtnSample, bsd_from_dtn, dtn_direct, dtn_from_bsd, dtn_sampler
from .energy_flux import extract_modes, flux, flux_series, mass_at_infinity
from .errors import IpeqError, NearPoleError
from .operator_core import GeometryWeights, eigenvalues, geometry_weights
from .spectral_data import BoundarySpectralData, bsd_equivalent, compute_bsd
from .time_domain import (
    KINDS,
    BoundarySource,
    PolynomialBump,
    ResponseKernel,
    profile_from_json,
    response_direct,
    response_from_dtn,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

DATA_KINDS = ("bsd", "dtn", "response", "flux")
ROUTES = {
    ("bsd", "dtn"): "dtn_from_bsd",
    ("dtn", "bsd"): "bsd_from_dtn",
    ("dtn", "response"): "response_from_dtn",
    ("response", "flux"): "flux",
    ("flux", "modes"): "extract_modes",
    ("flux", "bsd"): "extract_modes",
}
COMPARABLE = {("bsd", "bsd"), ("dtn", "dtn"), ("response", "response"), ("modes", "modes"),
              ("modes", "bsd"), ("bsd", "modes")}

DEFAULTS = {
    "model": "M1", "count": 60, "z": "0", "zgrid": None, "pole_gap": EPS_POLE, "tau0": 40.0,
    "response_kind": "wave", "T": 4.0, "dt": 1e-3, "source": None, "flux_kind": "wave",
    "chi_width": 0.5, "tau_step": 0.02, "tau_count": 10001, "a": None, "b": None, "tol": None,
    "seed": 0, "F": None, "H": None,
}


class UsageError(IpeqError, ValueError):
    """Bad command-line input."""


# ------------------------------------------------------------------ helpers
def _resolve(args) -> argparse.Namespace:
    cfg = io.read_json(args.config) if getattr(args, "config", None) else {}
    for key, value in cfg.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _model_spec(ref) -> dict:
    if isinstance(ref, dict):
        return ref
    if ref in io.DEFAULT_MODELS:
        return dict(io.DEFAULT_MODELS[ref])
    data = io.read_json(ref)
    return data.get("spec", data) if data.get("kind") == "model" else data


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _slot_vectors(op, args):
    from .verification import _slot_vectors

    F, H = _slot_vectors(op)
    if args.F is not None:
        F = np.asarray(_floats(args.F))
    if args.H is not None:
        H = np.asarray(_floats(args.H))
    if F.shape != (op.n_boundary,) or H.shape != (op.n_boundary,):
        raise UsageError(f"F and H need {op.n_boundary} entries")
    return F, H


def _source(op, args) -> BoundarySource:
    if args.source:
        data = args.source if isinstance(args.source, dict) else io.read_json(args.source)
        f = BoundarySource.from_json(data.get("source", data))
        if f.n_boundary != op.n_boundary:
            raise UsageError("source does not match the model boundary")
        return f
    F, _ = _slot_vectors(op, args)
    return BoundarySource.separable(F, PolynomialBump(0.0, 0.5))


def _weights_json(w: GeometryWeights) -> dict:
    return {"rho": w.rho.tolist(), "mean_curvature": w.mean_curvature.tolist()}


def _sample_json(s: DtnSample) -> dict:
    d = s.to_json()
    if s.budget:
        d["budget"] = {k: float(v) for k, v in s.budget.items() if np.isscalar(v)}
    return d


def _load(path, expect=None) -> dict:
    data = io.read_json(path)
    kind = data.get("kind")
    if kind is None:
        raise io.DataError(f"{path} carries no data kind")
    if expect and kind not in ((expect,) if isinstance(expect, str) else expect):
        raise io.DataError(f"{path} holds {kind!r} data, expected {expect!r}")
    return data


def _emit(out, payload: dict, args, command: str, inputs=(), op=None, provenance=None) -> Path:
    if not out:
        raise UsageError("--out is required")
    out = Path(out)
    try:
        io.write_json(out, payload)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc.strerror}") from exc
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "out") and _jsonable(v)}
    io.write_manifest(out, command, params, inputs, op, provenance)
    return out


def _jsonable(v) -> bool:
    return v is None or isinstance(v, (str, int, float, bool, list, tuple, dict))


def _chain(*paths) -> list:
    chain = []
    for p in paths:
        m = io.read_manifest(p)
        if m:
            chain += m.get("provenance", [])
            chain.append({"command": m["command"], "output": m["output"]})
    return chain


# ----------------------------------------------------------------- commands
def cmd_model(args) -> int:
    spec = _model_spec(args.model)
    op = io.operator_from_spec(spec)
    summary = op.summary()
    if args.action == "show":
        print(io.dumps({"spec": spec, "summary": summary}), end="")
        return EXIT_OK
    _emit(args.out, {"kind": "model", "spec": spec, "summary": summary}, args, "model build", op=op)
    return EXIT_OK


def _zgrid(args) -> list[complex]:
    if args.zgrid is not None:
        lo, hi, n = _floats(args.zgrid)
        return list(np.linspace(lo, hi, int(n)))
    return [complex(v) if isinstance(v, complex) else float(v) for v in _floats(args.z)]


def _dtn_samples(op, zs, gap):
    samples, skipped = [], []
    for z in zs:
        try:
            samples.append(_sample_json(dtn_direct(op, z, eps_pole=gap)))
        except NearPoleError as exc:
            skipped.append({"z": float(np.real(z)), "eigenvalue": exc.eigenvalue, "distance": exc.distance})
    return samples, skipped


def cmd_data(args) -> int:
    spec = _model_spec(args.model)
    op = io.operator_from_spec(spec)
    base = {"kind": args.kind, "model": spec, "operator_checksum": op.checksum(),
            "weights": _weights_json(geometry_weights(op))}
    if args.kind == "bsd":
        base["bsd"] = compute_bsd(op, int(args.count)).to_json()
    elif args.kind == "dtn":
        samples, skipped = _dtn_samples(op, _zgrid(args), float(args.pole_gap))
        base.update(samples=samples, skipped=skipped, pole_gap=float(args.pole_gap))
        for s in skipped:
            print(f"skipped z={s['z']:.6g}: within {s['distance']:.2g} of eigenvalue {s['eigenvalue']:.10g}")
    elif args.kind == "response":
        f = _source(op, args)
        r = response_direct(op, args.response_kind, f, float(args.T), float(args.dt))
        base.update(response=r.to_json(), source=f.to_json())
    else:
        F, H = _slot_vectors(op, args)
        chi = PolynomialBump(0.0, float(args.chi_width))
        taus = np.round(np.arange(int(args.tau_count)) * float(args.tau_step), 12)
        bsd = compute_bsd(op, int(args.count) * len(op.blocks))
        g = np.asarray(flux_series(bsd, args.flux_kind, F, H, chi, taus), dtype=complex)
        base.update(flux_kind=args.flux_kind, F=F.tolist(), H=H.tolist(), chi=chi.to_json(),
                    taus=taus.tolist(), values_re=g.real.tolist(), values_im=g.imag.tolist())
    _emit(args.out, base, args, f"data {args.kind}", op=op)
    return EXIT_OK


def _oracle(data: dict, path):
    """DtN data is held as an oracle: the recorded samples must match the model that answers queries."""
    op = io.operator_from_spec(data["model"])
    for s in data.get("samples", []):
        rec = DtnSample.from_json(s)
        now = dtn_direct(op, rec.z, eps_pole=0.0).matrix
        if np.abs(now - rec.matrix).max() > 1e-8 * (1.0 + np.abs(now).max()):
            raise io.DataError(f"{path}: samples do not match the recorded model")
    return op, dtn_sampler(op)


def _weights_of(data: dict, path) -> GeometryWeights:
    if "weights" in data:
        return GeometryWeights(np.asarray(data["weights"]["rho"], dtype=float),
                               np.asarray(data["weights"]["mean_curvature"], dtype=float))
    if "model" in data:
        return geometry_weights(io.operator_from_spec(data["model"]))
    raise io.DataError(f"{path}: no geometry weights and no model to estimate them from")


def cmd_transcode(args) -> int:
    route = (args.from_kind, args.to_kind)
    if route not in ROUTES:
        raise UsageError(f"no route {args.from_kind} -> {args.to_kind}; available: "
                         + ", ".join(f"{a}->{b}" for a, b in ROUTES))
    data = _load(args.input, args.from_kind)
    out = {"kind": "modes" if route[0] == "flux" else args.to_kind, "model": data.get("model"),
           "route": f"{args.from_kind}->{args.to_kind}"}
    op = None
    if route == ("bsd", "dtn"):
        bsd = BoundarySpectralData.from_json(data["bsd"])
        w = _weights_of(data, args.input)
        out["weights"] = _weights_json(w)
        out["samples"] = [_sample_json(dtn_from_bsd(bsd, w, z, float(args.tau0))) for z in _zgrid(args)]
        out["skipped"] = []
    elif route == ("dtn", "bsd"):
        op, sampler = _oracle(data, args.input)
        zs = [s["z"][0] for s in data.get("samples", [])]
        a = float(args.a) if args.a is not None else min(zs, default=None)
        b = float(args.b) if args.b is not None else max(zs, default=None)
        if a is None or b is None or not a < b:
            raise UsageError("dtn -> bsd needs a window a < b")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            got = bsd_from_dtn(sampler, a, b, boundary=op.geometry.boundary_descriptor())
        out.update(bsd=got.to_json(), window=[a, b], weights=data.get("weights"))
    elif route == ("dtn", "response"):
        op, sampler = _oracle(data, args.input)
        f = _source(op, args)
        r = response_from_dtn(sampler, args.response_kind, f, float(args.T), float(args.dt),
                              lowest_eigenvalue=float(eigenvalues(op)[0]))
        out.update(response=r.to_json(), source=f.to_json())
    elif route == ("response", "flux"):
        r = ResponseKernel.from_json(data["response"])
        f = BoundarySource.from_json(data["source"])
        if r.kind == "heat":
            raise UsageError("heat responses carry no energy flux")
        out.update(flux_kind=r.kind, flux=flux(r, f))
        if r.kind == "schrodinger":
            out["mass_at_infinity"] = mass_at_infinity(r, f)
    else:
        taus = np.asarray(data["taus"], dtype=float)
        g = np.asarray(data["values_re"]) + 1j * np.asarray(data["values_im"])
        kind = data["flux_kind"]
        ex = extract_modes(g if kind != "heat" and kind != "wave" else g.real, taus, kind,
                           chi=profile_from_json(data["chi"]))
        out.update(modes=ex.to_json(), F=data["F"], H=data["H"], flux_kind=kind)
    _emit(args.out, out, args, f"transcode {args.from_kind}->{args.to_kind}", [args.input], op,
          _chain(args.input))
    return EXIT_OK


# ------------------------------------------------------------------- verify
def _compare(a: dict, b: dict, tol) -> list:
    from .verification import Check

    ka, kb = a["kind"], b["kind"]
    if (ka, kb) not in COMPARABLE:
        raise io.DataError(f"cannot compare {ka!r} with {kb!r}")
    if ka == kb == "bsd":
        x, y = BoundarySpectralData.from_json(a["bsd"]), BoundarySpectralData.from_json(b["bsd"])
        n = min(len(x), len(y))
        tol = tol or 1e-6
        rep = bsd_equivalent(x.truncate(n), y.truncate(n), tol=tol)
        res = max([rep.eigenvalue_residual] + [k["kernel_residual"] for k in rep.kernel_residuals])
        return [Check(f"bsd equivalence on {n} entries", res, tol, bool(rep.equivalent))]
    if ka == kb == "dtn":
        sa = {tuple(s["z"]): s for s in a["samples"]}
        checks = []
        for s in b["samples"]:
            if tuple(s["z"]) not in sa:
                continue
            other = sa[tuple(s["z"])]
            err = np.abs(DtnSample.from_json(s).matrix - DtnSample.from_json(other).matrix).max()
            # a reconstructed sample is judged against its own error budget
            budget = max(s.get("budget", {}).get("total", 0.0), other.get("budget", {}).get("total", 0.0))
            t = max(tol or 1e-6, 2.0 * budget)
            checks.append(Check(f"dtn at z={complex(*s['z']):.6g}", float(err), t, bool(err <= t)))
        if not checks:
            raise io.DataError("the two dtn files share no z values")
        return checks
    if ka == kb == "response":
        ra, rb = ResponseKernel.from_json(a["response"]), ResponseKernel.from_json(b["response"])
        if ra.kind != rb.kind or ra.samples.shape != rb.samples.shape or ra.dt != rb.dt:
            raise io.DataError("responses differ in kind or time grid")
        tol = tol or 1e-3
        err = float(np.abs(ra.samples - rb.samples).max())
        return [Check(f"{ra.kind} response", err, tol, err <= tol)]
    # recovered modes against reference eigenvalues
    tol = tol or 1e-3
    lam = [np.asarray([m["lambda"] for m in d["modes"]["modes"]]) if d["kind"] == "modes"
           else np.asarray([e["lambda"] for e in d["bsd"]["entries"]]) for d in (a, b)]
    got, ref = (lam[0], lam[1]) if ka == "modes" else (lam[1], lam[0])
    errs = [float(np.min(np.abs(ref - g)) / max(abs(g), 1e-12)) for g in got]
    worst = max(errs, default=np.inf)
    return [Check(f"{len(got)} recovered eigenvalues against reference", worst, tol, worst <= tol)]


def cmd_verify(args) -> int:
    from .verification import SUITES, run_suite

    if args.files:
        if len(args.files) != 2:
            raise UsageError("verify compares exactly two files")
        checks = _compare(_load(args.files[0]), _load(args.files[1]), args.tol)
        report = {"suite": "compare", "passed": all(c.passed for c in checks),
                  "models": {"files": [vars(c) for c in checks]}, "lines": {"files": [c.line() for c in checks]}}
        inputs = args.files
    else:
        suite = args.suite or "theorem1"
        if suite not in SUITES:
            raise UsageError(f"unknown suite {suite!r}")
        models = args.models or None
        report = run_suite(suite, models)
        inputs = [m for m in (models or []) if Path(m).is_file()]
    for label, lines in report["lines"].items():
        for line in lines:
            print(f"[{label}] {line}")
    print(("PASS" if report["passed"] else "FAIL") + f"  {report['suite']}")
    if args.out:
        report = {k: v for k, v in report.items() if k != "seconds"}
        _emit(args.out, report, args, "verify", inputs)
    return EXIT_OK if report["passed"] else EXIT_FAIL


# ----------------------------------------------------------------- plotdata
def cmd_plotdata(args) -> int:
    data = _load(args.input, "flux" if args.dataset == "flux" else "dtn")
    if args.dataset == "flux":
        taus = data["taus"]
        rows = zip(taus, data["values_re"], data["values_im"])
        header = ["tau", "flux_re", "flux_im"]
    else:
        samples = sorted((DtnSample.from_json(s) for s in data["samples"]), key=lambda s: np.real(s.z))
        if args.dataset == "remainder":
            w = _weights_of(data, args.input)
            lead = lambda t: -t * w.rho - 0.5 * w.rho * w.mean_curvature  # noqa: E731
            picked = [s for s in samples if np.real(s.z) < 0 and np.imag(s.z) == 0]
            picked.sort(key=lambda s: np.sqrt(-np.real(s.z)))
            header = ["tau"] + [f"remainder_{j}" for j in range(len(w.rho))]
            rows = []
            for s in picked:
                t = float(np.sqrt(-np.real(s.z)))
                rows.append([t, *np.abs(np.real(np.diag(s.matrix)) - lead(t))])
        else:
            header = ["z", "max_abs_dtn"]
            rows = [[float(np.real(s.z)), float(np.abs(s.matrix).max())] for s in samples if np.imag(s.z) == 0]
    out = Path(args.out) if args.out else None
    if out is None:
        raise UsageError("--out is required")
    try:
        io.write_csv(out, header, rows)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc.strerror}") from exc
    io.write_manifest(out, f"plotdata {args.dataset}", {"dataset": args.dataset}, [args.input],
                      provenance=_chain(args.input))
    return EXIT_OK


# ------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipeq", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        sp.add_argument("--config", help="JSON file of option defaults")
        sp.add_argument("--out", help="output file")
        if model:
            sp.add_argument("--model", help="M1, M2 or a model JSON file")
        return sp

    m = common(sub.add_parser("model", help="build or show a model"))
    m.add_argument("action", choices=("build", "show"))
    m.set_defaults(func=cmd_model)

    d = common(sub.add_parser("data", help="generate a data object directly"))
    d.add_argument("kind", choices=DATA_KINDS)
    d.add_argument("--count", type=int, help="eigenpairs per mode block")
    d.add_argument("--z", help="comma-separated spectral parameters")
    d.add_argument("--zgrid", help="lo,hi,n real grid")
    d.add_argument("--pole-gap", type=float, help="relative distance below which a z is skipped")
    _time_options(d)
    d.set_defaults(func=cmd_data)

    t = common(sub.add_parser("transcode", help="convert one data kind into another"), model=False)
    t.add_argument("--from", dest="from_kind", required=True)
    t.add_argument("--to", dest="to_kind", required=True)
    t.add_argument("--input", required=True)
    t.add_argument("--z")
    t.add_argument("--zgrid")
    t.add_argument("--tau0", type=float)
    t.add_argument("--a", type=float, help="lower end of the pole window")
    t.add_argument("--b", type=float, help="upper end of the pole window")
    _time_options(t)
    t.set_defaults(func=cmd_transcode)

    v = common(sub.add_parser("verify", help="run a suite or compare two files"), model=False)
    v.add_argument("files", nargs="*")
    v.add_argument("--suite")
    v.add_argument("--model", dest="models", action="append", help="repeatable; default per suite")
    v.add_argument("--tol", type=float)
    v.set_defaults(func=cmd_verify)

    g = common(sub.add_parser("plotdata", help="plot-ready CSV from a dataset"), model=False)
    g.add_argument("dataset", choices=("flux", "remainder", "polescan"))
    g.add_argument("--input", required=True)
    g.set_defaults(func=cmd_plotdata)
    return p


def _time_options(sp):
    sp.add_argument("--response-kind", choices=KINDS)
    sp.add_argument("--T", type=float, help="horizon")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--source", help="BoundarySource JSON file")
    sp.add_argument("--flux-kind", choices=("wave", "heat", "schrodinger", "mass"))
    sp.add_argument("--chi-width", type=float)
    sp.add_argument("--tau-step", type=float)
    sp.add_argument("--tau-count", type=int)
    sp.add_argument("--F", help="comma-separated boundary vector")
    sp.add_argument("--H", help="comma-separated boundary vector")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(_resolve(args))
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"ipeq: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"ipeq: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
