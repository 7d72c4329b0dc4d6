import csv
import math
import io
import json

import pytest

from nvspin.cli import main

SEC2 = ["--azz", "-49.1", "--tnd", "1.4"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(out):
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_rank_top4(capsys):
    code, out, _ = run(capsys, "rank", "--top", "4")
    assert code == 0
    assert [int(r["id"]) for r in table(out)] == [505, 7, 469, 8]
    assert table(out)[0]["tau0"] == "10000000000.0"


def test_provenance_header(capsys):
    _, out, _ = run(capsys, "--seed", "3", "rank", "--top", "1")
    first = out.splitlines()[0]
    assert first.startswith("# nvspin ")
    cfg = json.loads(first.split(" ", 3)[3])
    assert cfg["command"] == "rank" and cfg["seed"] == 3 and cfg["gamma_n"] == 1.071


def test_observables_sec2(capsys):
    code, out, _ = run(capsys, "observables", *SEC2, "--field", "338.2")
    assert code == 0
    (row,) = table(out)
    assert float(row["delta_minus_khz"]) == pytest.approx(313.1, abs=0.05)


def test_observables_site_and_sweep(capsys):
    code, out, _ = run(capsys, "observables", "--site", "222", "--sweep", "0:100:5")
    assert code == 0
    rows = table(out)
    assert len(rows) == 5
    assert float(rows[0]["delta0_khz"]) == pytest.approx(math.hypot(1000.6, 14), abs=1e-9)


def test_contradictory_flags(capsys):
    code, _, err = run(capsys, "observables", "--site", "7", "--azz", "1", "--tnd", "1")
    assert code == 2 and "--site" in err
    code, _, _ = run(capsys, "endor", *SEC2, "--field", "1", "--larmor", "2", "--sweep", "1:2:1")
    assert code == 2
    code, _, _ = run(capsys, "ssr", "--flip-prob", "0.1", "--dwell", "4")
    assert code == 2


def test_unknown_flag(capsys):
    assert run(capsys, "rank", "--bogus")[0] == 2


def test_endor_row_count(capsys):
    code, out, _ = run(capsys, "endor", *SEC2, "--larmor", "362.2", "--sweep", "300:320:0.1", "--manifold", "-1")
    assert code == 0
    rows = table(out)
    assert len(rows) == 201
    best = max(rows, key=lambda r: float(r["flip_probability"]))
    assert float(best["rf_khz"]) == pytest.approx(313.1, abs=0.2)


def test_ingest_empty(tmp_path, capsys):
    p = tmp_path / "empty.tsv"
    p.write_text("")
    code, out, _ = run(capsys, "ingest", "--table", str(p))
    assert code == 0
    assert "# 0 rows" in out


def test_ingest_bad_row(tmp_path, capsys):
    p = tmp_path / "bad.tsv"
    p.write_text("# header comment\n1\t2\t3\t4\t5\t6\t7\t8\t9\n")
    code, _, err = run(capsys, "ingest", "--table", str(p))
    assert code == 2
    assert "bad.tsv:2" in err


def test_ingest_missing_file(tmp_path, capsys):
    assert run(capsys, "ingest", "--table", str(tmp_path / "nope.tsv"))[0] == 2


def test_ingest_store_round_trip(tmp_path, capsys):
    from nvspin import data  # noqa: F401  (package data location)
    from importlib import resources

    src = tmp_path / "sites.tsv"
    src.write_text(resources.files("nvspin.data").joinpath("sites.tsv").read_text())
    store = tmp_path / "store.json"
    code, first, _ = run(capsys, "ingest", "--table", str(src), "--store", str(store))
    assert code == 0
    assert "# 510 rows" in first
    code, second, _ = run(capsys, "ingest", "--table", str(store))
    assert code == 0
    strip = lambda t: [l for l in t.splitlines() if not l.startswith("# nvspin")]
    assert strip(first) == strip(second)


def test_strict_escalates(capsys):
    code, _, err = run(capsys, "--strict", "observables", *SEC2, "--field", "1030")
    assert code == 1 and "warning" in err
    assert run(capsys, "observables", *SEC2, "--field", "1030")[0] == 0


def test_gamma_env(monkeypatch, capsys):
    monkeypatch.setenv("NVSPIN_GAMMA_N", "2.0")
    _, out, _ = run(capsys, "observables", *SEC2, "--field", "100")
    assert float(table(out)[0]["delta_n_khz"]) == 200.0
    _, out, _ = run(capsys, "--gamma-n", "1.0", "observables", *SEC2, "--field", "100")
    assert float(table(out)[0]["delta_n_khz"]) == 100.0


def test_json_format(capsys):
    code, out, _ = run(capsys, "families", "--format", "json")
    doc = json.loads(out)
    labels = [r["label"] for r in doc["rows"]]
    assert labels == ["Axial", "St1", "St2", "St3", "St4"]
    assert doc["provenance"]["command"] == "families"


def test_output_file(tmp_path, capsys):
    out = tmp_path / "o.csv"
    code, stdout, _ = run(capsys, "xy8", *SEC2, "--field", "355", "--n-max", "4", "--output", str(out))
    assert code == 0 and stdout == ""
    assert len(table(out.read_text())) == 4


def test_tensor_and_dipolar(tmp_path, capsys):
    m = tmp_path / "m.tsv"
    m.write_text("7\t0\t0\t3\t0\t4\t-7\n")
    _, out, _ = run(capsys, "tensor", "--matrix", str(m), "--site-azimuth", "0")
    (row,) = table(out)
    assert row["id"] == "7" and float(row["t_nd"]) == 5.0
    d = tmp_path / "d.tsv"
    d.write_text("0 0 1 1\n")
    _, out, _ = run(capsys, "dipolar", "--density", str(d), "--nucleus", "0,0,0", "--axis", "0,0,1")
    (row,) = table(out)
    assert float(row["t_zz"]) == 2.0 and float(row["symmetry_residual"]) == 0.0
