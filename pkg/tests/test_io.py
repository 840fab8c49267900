import json
import math

import numpy as np
import pytest

from specdetect.io import atomic_write_text, format_number, read_json, write_csv, write_json


def test_format_number_round_trips_doubles(rng):
    for _ in range(200):
        x = float(rng.normal() * 10.0 ** rng.integers(-12, 12))
        assert float(format_number(x)) == x


def test_format_number_integers():
    assert format_number(42) == "42"


def test_write_csv_cells(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b", "c"], [(1.5, "x", True), (2.0, "y", False)])
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b,c"
    assert lines[1] == "1.5,x,1"
    assert lines[2] == "2,y,0"


def test_write_json_handles_arrays_and_nonfinite(tmp_path):
    path = tmp_path / "t.json"
    write_json(path, {"v": np.array([1.0, 2.0]), "e": math.inf, "n": np.int64(3)})
    back = json.loads(path.read_text())  # strict parse must succeed
    assert back["v"] == [1.0, 2.0]
    assert back["e"] == "inf"
    assert back["n"] == 3
    assert read_json(path) == back


def test_atomic_write_replaces_whole_file(tmp_path):
    path = tmp_path / "f.txt"
    atomic_write_text(path, "first")
    atomic_write_text(path, "second")
    assert path.read_text() == "second"
    leftovers = [p for p in tmp_path.iterdir() if p.name != "f.txt"]
    assert leftovers == []
