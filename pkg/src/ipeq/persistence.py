"""Model specification files, data files, manifests and CSV output.

Everything is plain JSON or CSV.  JSON is written with sorted keys and
``repr`` floats so identical inputs give byte-identical files; only the
manifest's ``created`` stamp changes between runs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import InvalidModelError, ShapeError
from .fields import as_field
from .operator_core import DiscretizedOperator, GeometryModel, build_operator

DEFAULT_MODELS = {
    "M1": {"kind": "interval", "n": 400, "metric": {"type": "constant", "values": [1.0]},
           "potential": {"type": "constant", "values": [0.0]}},
    "M2": {"kind": "disc", "n": 200, "radius": 1.0, "mode_cutoff": 4,
           "metric": {"type": "constant", "values": [1.0]},
           "potential": {"type": "constant", "values": [0.0]}},
}


class DataError(ShapeError):
    """A data file is missing, unreadable or of the wrong kind."""


def geometry_from_spec(spec: dict) -> GeometryModel:
    try:
        return GeometryModel(spec["kind"], int(spec.get("n", 400)), float(spec.get("radius", 1.0)),
                             int(spec.get("mode_cutoff", 0)), int(spec.get("degree", 6)))
    except KeyError as exc:
        raise InvalidModelError(f"model spec lacks {exc}") from exc


def operator_from_spec(spec: dict | str | Path) -> DiscretizedOperator:
    """Build an operator from a spec dict, a path to one, or ``"M1"``/``"M2"``."""
    if isinstance(spec, Path):
        spec = read_json(spec)
    elif isinstance(spec, str):
        spec = DEFAULT_MODELS[spec] if spec in DEFAULT_MODELS else read_json(spec)
    if not isinstance(spec, dict):
        raise InvalidModelError("model spec must be a JSON object")
    geo = geometry_from_spec(spec)
    L = geo.length
    metric = as_field(spec.get("metric", 1.0), L)
    potential = as_field(spec.get("potential", 0.0), L)
    shift = float(spec.get("shift", 0.0))
    if shift:
        base = potential
        potential = as_field(lambda x: base(x) + shift, L)
    if spec.get("form", "schrodinger") == "conductivity":
        from .gauge_transform import as_conductivity, build_conductivity_operator

        return build_conductivity_operator(geo, as_conductivity(spec.get("conductivity", 1.0), L), potential)
    return build_operator(geo, metric, potential)


# ------------------------------------------------------------------- files
def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def write_json(path, obj) -> str:
    text = dumps(obj)
    Path(path).write_text(text)
    return sha256_text(text)


def read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"no such file: {path}")
    try:
        return json.loads(p.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def write_csv(path, header, rows) -> str:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return sha256_file(path)


def read_csv(path) -> tuple[list[str], np.ndarray]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"no such file: {path}")
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path} has non-numeric rows: {exc}") from exc
    return rows[0], data.reshape(len(rows) - 1, len(rows[0]))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(output, command: str, parameters: dict, inputs=(), operator: DiscretizedOperator | None = None,
                   provenance: list | None = None) -> Path:
    """``<output>.manifest.json`` naming inputs and outputs by checksum."""
    out = Path(output)
    manifest = {
        "command": command,
        "parameters": parameters,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "output": {str(out): sha256_file(out)},
        "operator_checksum": operator.checksum() if operator is not None else None,
        "provenance": provenance or [],
        "versions": {"ipeq": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = out.with_name(out.name + ".manifest.json")
    write_json(path, manifest)
    return path


def read_manifest(path) -> dict | None:
    p = Path(str(path) + ".manifest.json")
    return read_json(p) if p.is_file() else None
