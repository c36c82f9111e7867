import csv
import json
from pathlib import Path

import numpy as np
import pytest

from fraccap import jsonio
from fraccap.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, main, run_scenario
from fraccap.spaceio import load_space

TOUR = Path(__file__).resolve().parent.parent / "scenarios" / "tour.json"


def write_scenario(tmp_path, campaigns, sets=None, m=33):
    sc = {"seed": 1, "space": {"generator": "grid", "dim": 1, "m": m},
          "sets": sets or {}, "campaigns": campaigns}
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(sc))
    return path


def read_csv(path, delimiter=","):
    with open(path, newline="") as fh:
        return list(csv.reader(fh, delimiter=delimiter))


def band_campaign(name="band"):
    return {"name": name, "op": "ball_capacity_band",
            "params": {"centers": [16], "radii": [0.0625, 0.125], "beta": 0.5, "p": 2, "q": 2}}


def test_empty_campaign_list(tmp_path):
    sc = write_scenario(tmp_path, [])
    out = tmp_path / "out"
    assert main(["run", str(sc), "--out", str(out), "--cache", str(tmp_path / "c")]) == EXIT_OK
    report = jsonio.load(out / "report.json")
    assert report["campaigns"] == []
    assert read_csv(out / "campaigns.csv") == [["name", "op", "status", "rows", "error"]]
    for fmt in ("csv", "json", "plotdata"):
        assert main(["export", str(out / "report.json"), "--format", fmt]) == EXIT_OK
    assert jsonio.load(out / "export_json" / "report.json") == report
    assert read_csv(out / "export_plotdata" / "plotdata.tsv", "\t") == [["campaign", "op", "file",
                                                                       "layout"]]


def test_band_csv_columns(tmp_path):
    sc = write_scenario(tmp_path, [band_campaign()])
    out = tmp_path / "out"
    report, code = run_scenario(sc, cache_dir=str(tmp_path / "c"), out=out)
    assert code == EXIT_OK
    rows = read_csv(out / "band.csv")
    assert rows[0] == ["x0", "r", "Lambda", "beta", "p", "q", "cap", "normalized",
                       "lipschitz_upper", "status"]
    assert len(rows) == 3 and all(r[-1] == "exact" for r in rows[1:])
    assert float(rows[1][6]) <= float(rows[1][8])
    assert (out / "timings.json").exists()
    assert "timings" not in report


def test_unknown_set_exits_2(tmp_path, capsys):
    camp = {"name": "c", "op": "hausdorff_content",
            "params": {"F": "nope", "d": 1.0, "rho": 0.25, "mode": "exact"}}
    sc = write_scenario(tmp_path, [camp])
    assert main(["run", str(sc), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "nope" in capsys.readouterr().err
    assert main(["validate", str(sc)]) == EXIT_INVALID


def test_missing_field_names_path(tmp_path, capsys):
    camp = band_campaign()
    del camp["params"]["beta"]
    sc = write_scenario(tmp_path, [camp])
    assert main(["validate", str(sc)]) == EXIT_INVALID
    assert "scenario.campaigns[0].params.beta" in capsys.readouterr().err


def test_bad_json_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", str(bad)]) == EXIT_INVALID
    assert main(["validate", str(tmp_path / "missing.json")]) == EXIT_INVALID


def test_failed_campaign_exits_1(tmp_path):
    # a field without zeros in the ball passes validation but fails when run
    camp = {"name": "mazya", "op": "mazya_check",
            "params": {"field": {"kind": "values", "values": [1.0] * 33}, "center": 16,
                       "radius": 0.125, "beta": 0.5, "p": 2, "q": 2, "t": 2}}
    sc = write_scenario(tmp_path, [band_campaign(), camp])
    out = tmp_path / "o"
    report, code = run_scenario(sc, cache_dir=str(tmp_path / "c"), out=out)
    assert code == EXIT_FAILED
    assert [c["status"] for c in report["campaigns"]] == ["ok", "error"]
    assert "DegenerateError" in report["campaigns"][1]["error"]
    assert read_csv(out / "campaigns.csv")[2][:3] == ["mazya", "mazya_check", "error"]


def test_gen_grid(tmp_path):
    out = tmp_path / "g.json"
    assert main(["gen", "grid", "--dim", "1", "--m", "9", "--out", str(out)]) == EXIT_OK
    S, _ = load_space(out)
    assert S.n == 9
    np.testing.assert_array_equal(S.weights, np.full(9, 0.125))


def test_gen_cantor(tmp_path):
    out = tmp_path / "c.json"
    assert main(["gen", "cantor_line", "--depth", "2", "--ratio", "0.333",
                 "--out", str(out)]) == EXIT_OK
    S, sets = load_space(out)
    assert S.n == 9
    assert list(sets["E"].indices) == [0, 2, 6, 8]


def test_gen_refuses_cap(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert main(["gen", "grid", "--dim", "1", "--m", "100000", "--out", str(out)]) == EXIT_INVALID
    assert "cap" in capsys.readouterr().err
    assert not out.exists()


def test_export_unknown_format(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["export", str(tmp_path / "r.json"), "--format", "xml"])
    assert exc.value.code == 2


def test_export_json_roundtrip(tmp_path):
    sc = write_scenario(tmp_path, [band_campaign()])
    out = tmp_path / "out"
    report, _ = run_scenario(sc, cache_dir=str(tmp_path / "c"), out=out)
    assert main(["export", str(out / "report.json"), "--format", "json",
                 "--out", str(tmp_path / "x")]) == EXIT_OK
    again = jsonio.load(tmp_path / "x" / "report.json")
    assert again == report
    assert (tmp_path / "x" / "report.json").read_bytes() == (out / "report.json").read_bytes()


def test_warm_cache_reproduces_report(tmp_path):
    sc = write_scenario(tmp_path, [band_campaign()])
    cache = str(tmp_path / "c")
    run_scenario(sc, cache_dir=cache, out=tmp_path / "a")
    run_scenario(sc, cache_dir=cache, out=tmp_path / "b")
    assert (tmp_path / "a" / "report.json").read_bytes() == \
        (tmp_path / "b" / "report.json").read_bytes()
    assert jsonio.load(tmp_path / "b" / "timings.json")["cache_hits"] > 0


def test_tour_scenario(tmp_path):
    out = tmp_path / "tour"
    assert main(["validate", str(TOUR)]) == EXIT_OK
    report, code = run_scenario(TOUR, cache_dir=str(tmp_path / "c"), out=out)
    assert code == EXIT_OK
    assert all(c["status"] == "ok" for c in report["campaigns"])
    assert len(report["campaigns"]) == 19
    assert main(["export", str(out / "report.json"), "--format", "plotdata"]) == EXIT_OK
    index = {r[0]: r for r in read_csv(out / "export_plotdata" / "plotdata.tsv", "\t")[1:]}
    assert index["self_improve"][3] == "grid"
    assert index["band"][3] == "xy"
    grid_rows = read_csv(out / "export_plotdata" / "self_improve.tsv", "\t")
    si = next(c for c in report["campaigns"] if c["name"] == "self_improve")
    # one row per lattice point
    assert grid_rows[0] == ["beta", "p", "q", "c0"]
    assert len(grid_rows) - 1 == len(si["rows"])
