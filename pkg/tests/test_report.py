"""Report serialization: CSV cells, field/table writers, JSON layout."""

import json

import numpy as np

from sublevy.grids import Field, Grid
from sublevy.report import (RunReport, format_cell, write_field_csv,
                            write_report_json, write_table_csv)


def test_format_cell_round_trip():
    assert format_cell(True) == "true"
    assert format_cell(False) == "false"
    assert format_cell(3) == "3"
    assert format_cell(np.int64(7)) == "7"
    # 17 significant digits round-trip any double
    for v in (0.1, 1.0 / 3.0, 2.5758293035489004, 1e-300):
        assert float(format_cell(v)) == v
    assert format_cell("label") == "label"


def test_field_csv_1d(tmp_path):
    g = Grid(1, 1.0, 3)
    path = tmp_path / "field.csv"
    write_field_csv(path, g, np.array([1.0, 2.0, 3.0]))
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "x,u"
    assert lines[1] == "-1,1"
    assert len(lines) == 4


def test_field_csv_2d_row_major(tmp_path):
    g = Grid(2, 1.0, 3)
    vals = np.arange(9.0).reshape(3, 3)
    path = tmp_path / "field.csv"
    write_field_csv(path, g, vals)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "x,y,u"
    # first row fixes x=-1 and walks y
    assert lines[1] == "-1,-1,0"
    assert lines[2] == "-1,0,1"
    assert lines[4] == "0,-1,3"
    assert len(lines) == 10


def test_table_csv_dict_rows(tmp_path):
    path = tmp_path / "table.csv"
    write_table_csv(path, ["t", "passed"], [{"t": 0.5, "passed": True}])
    assert path.read_text() == "t,passed\n0.5,true\n"


def test_table_csv_sequence_rows(tmp_path):
    path = tmp_path / "table.csv"
    write_table_csv(path, ["a", "b"], [(1, 2), (3, 4)])
    assert path.read_text() == "a,b\n1,2\n3,4\n"


def test_report_json_sorted_and_excludes_extras(tmp_path):
    rep = RunReport(mode="solve", dt=0.01, n_steps=5,
                    sup_norm_history=[1.0, 0.9],
                    grid={"dim": 1, "half_width": 6.0, "points": 241},
                    metrics={"err": np.float64(1e-3)},
                    extras={"field": np.zeros(3)})
    path = tmp_path / "report.json"
    write_report_json(path, rep)
    text = path.read_text()
    assert text.endswith("\n")
    data = json.loads(text)
    assert "extras" not in data
    assert data["schema_version"] == 1
    assert data["metrics"]["err"] == 1e-3
    assert isinstance(data["metrics"]["err"], float)
    # keys are sorted at every level
    assert list(data) == sorted(data)


def test_report_to_dict_plain_types():
    rep = RunReport(mode="dp", metrics={"v": np.float32(2.0), "n": np.int32(3),
                                        "arr": np.array([1.0, 2.0]),
                                        "flag": np.bool_(True)})
    d = rep.to_dict()
    assert d["metrics"]["v"] == 2.0 and isinstance(d["metrics"]["v"], float)
    assert d["metrics"]["n"] == 3 and isinstance(d["metrics"]["n"], int)
    assert d["metrics"]["arr"] == [1.0, 2.0]
    assert d["metrics"]["flag"] is True
