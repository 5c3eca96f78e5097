import csv
import json

import numpy as np
import pytest

from ipeq import eigenvalues, operator_from_spec
from ipeq import persistence as io
from ipeq.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(path.read_text())


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("data", "bsd", "--model", "M1", "--out", d / "bsd.json") == 0
    assert run("data", "dtn", "--model", "M1", "--zgrid=-100,50,50", "--out", d / "dtn.json") == 0
    return d


def test_bsd_file_and_manifest(work):
    data = load(work / "bsd.json")
    assert data["kind"] == "bsd" and len(data["bsd"]["entries"]) >= 20
    man = io.read_manifest(work / "bsd.json")
    assert man["command"] == "data bsd"
    assert man["output"][str(work / "bsd.json")] == io.sha256_file(work / "bsd.json")
    assert man["operator_checksum"] == data["operator_checksum"]


def test_dtn_grid(work):
    data = load(work / "dtn.json")
    assert len(data["samples"]) + len(data["skipped"]) == 50


def test_model_show_and_build(tmp_path, capsys):
    assert run("model", "show", "--model", "M2") == 0
    assert '"disc"' in capsys.readouterr().out
    assert run("model", "build", "--model", "M1", "--out", tmp_path / "m.json") == 0
    spec = load(tmp_path / "m.json")["spec"]
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    np.testing.assert_array_equal(eigenvalues(operator_from_spec(tmp_path / "spec.json"))[:5],
                                  eigenvalues(operator_from_spec("M1"))[:5])


def test_config_defaults_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"count": 7, "model": "M1"}))
    assert run("data", "bsd", "--config", cfg, "--out", tmp_path / "a.json") == 0
    assert len(load(tmp_path / "a.json")["bsd"]["entries"]) == 7
    assert run("data", "bsd", "--config", cfg, "--count", 4, "--out", tmp_path / "b.json") == 0
    assert len(load(tmp_path / "b.json")["bsd"]["entries"]) == 4


def test_bsd_to_dtn_matches_direct(work):
    assert run("transcode", "--from", "bsd", "--to", "dtn", "--input", work / "bsd.json", "--z", 0,
               "--out", work / "dtn_rec.json") == 0
    assert run("data", "dtn", "--model", "M1", "--z", 0, "--out", work / "dtn0.json") == 0
    assert run("verify", work / "dtn0.json", work / "dtn_rec.json") == 0
    man = io.read_manifest(work / "dtn_rec.json")
    assert man["inputs"][str(work / "bsd.json")] == io.sha256_file(work / "bsd.json")
    assert man["provenance"][0]["command"] == "data bsd"


def test_dtn_to_bsd_round_trip(work):
    assert run("transcode", "--from", "dtn", "--to", "bsd", "--input", work / "dtn.json", "--a", 5, "--b", 50,
               "--out", work / "rt.json") == 0
    assert run("verify", work / "bsd.json", work / "rt.json") == 0


def test_response_chain(tmp_path):
    d = tmp_path
    assert run("data", "dtn", "--model", "M1", "--z", "-1", "--out", d / "dtn.json") == 0
    assert run("data", "response", "--model", "M1", "--T", 2.0, "--dt", 1e-3, "--out", d / "r.json") == 0
    assert run("transcode", "--from", "dtn", "--to", "response", "--input", d / "dtn.json", "--T", 2.0,
               "--dt", 1e-3, "--out", d / "rs.json") == 0
    assert run("transcode", "--from", "response", "--to", "flux", "--input", d / "r.json", "--out", d / "f.json") == 0
    assert load(d / "f.json")["flux"] > 0
    assert [p["command"] for p in io.read_manifest(d / "f.json")["provenance"]] == ["data response"]


def test_flux_to_modes_against_bsd(work):
    assert run("data", "flux", "--model", "M1", "--count", 30, "--out", work / "flux.json") == 0
    assert run("transcode", "--from", "flux", "--to", "modes", "--input", work / "flux.json",
               "--out", work / "modes.json") == 0
    assert load(work / "modes.json")["kind"] == "modes"
    assert run("verify", work / "modes.json", work / "bsd.json") == 0
    assert run("plotdata", "flux", "--input", work / "flux.json", "--out", work / "flux.csv") == 0
    assert len(rows(work / "flux.csv")) - 1 == len(load(work / "flux.json")["taus"])


def test_remainder_decays(work):
    assert run("data", "dtn", "--model", "M2", "--z=-100,-400,-900,-1600", "--out", work / "tail.json") == 0
    assert run("plotdata", "remainder", "--input", work / "tail.json", "--out", work / "rem.csv") == 0
    table = np.array(rows(work / "rem.csv")[1:], dtype=float)
    assert np.all(np.diff(table[:, 0]) > 0)
    assert np.all(np.diff(table[:, 1]) < 0)


def test_polescan_peaks_at_eigenvalues(tmp_path):
    assert run("data", "dtn", "--model", "M1", "--zgrid=1,100,991", "--pole-gap", 1e-3,
               "--out", tmp_path / "scan.json") == 0
    assert run("plotdata", "polescan", "--input", tmp_path / "scan.json", "--out", tmp_path / "scan.csv") == 0
    table = np.array(rows(tmp_path / "scan.csv")[1:], dtype=float)
    z, v = table[:, 0], table[:, 1]
    peaks = z[1:-1][(v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])]
    lam = eigenvalues(operator_from_spec("M1"))
    lam = lam[lam < 100]
    assert len(peaks) == len(lam)
    np.testing.assert_allclose(peaks, lam, atol=0.2)


def test_skipped_samples_are_reported(tmp_path, capsys):
    lam = float(eigenvalues(operator_from_spec("M1"))[0])
    assert run("data", "dtn", "--model", "M1", "--z", f"{lam},{lam + 5}", "--out", tmp_path / "d.json") == 0
    assert "skipped" in capsys.readouterr().out
    assert len(load(tmp_path / "d.json")["skipped"]) == 1


def test_output_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("data", "bsd", "--model", "M2", "--count", 3, "--out", tmp_path / f"{name}.json") == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_usage_errors(work, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("garbage")
    assert run("verify", bad, work / "bsd.json") == 2
    assert run("verify", work / "bsd.json", work / "dtn.json") == 2
    assert run("transcode", "--from", "bsd", "--to", "response", "--input", work / "bsd.json",
               "--out", tmp_path / "x.json") == 2
    assert run("transcode", "--from", "dtn", "--to", "bsd", "--input", work / "bsd.json",
               "--out", tmp_path / "x.json") == 2
    assert run("data", "bsd", "--model", "M1", "--out", tmp_path / "missing" / "x.json") == 2
    assert run("data", "bsd", "--model", "M9", "--out", tmp_path / "x.json") == 2
    assert run("frobnicate") == 2


def test_tampered_dtn_rejected(work, tmp_path):
    data = load(work / "dtn.json")
    data["samples"][0]["matrix_re"][0][0] += 1.0
    (tmp_path / "t.json").write_text(json.dumps(data))
    assert run("transcode", "--from", "dtn", "--to", "bsd", "--input", tmp_path / "t.json",
               "--out", tmp_path / "o.json") == 2


def test_persistence_round_trips(tmp_path):
    payload = {"b": [1.0, 2.5], "a": {"z": None}}
    io.write_json(tmp_path / "p.json", payload)
    assert io.read_json(tmp_path / "p.json") == payload
    assert io.dumps(payload) == io.dumps(dict(reversed(list(payload.items()))))
    io.write_csv(tmp_path / "p.csv", ["x", "y"], [[1, 2.0], [3, 4.5]])
    assert io.read_csv(tmp_path / "p.csv")[0] == ["x", "y"]
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(io.DataError):
        io.read_json(tmp_path / "broken.json")
