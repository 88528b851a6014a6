import io
import json
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtcert.bounds import BinaryStats, RealStats, TaskRecord
from mtcert.certify import Certificate, certificate_curve
from mtcert.io import (
    DatasetError,
    atomic_write,
    certificate_to_dict,
    curve_to_table,
    dicts_to_table,
    parse_dataset,
    read_table,
    round_down,
    round_near,
    round_up,
    serialize_dataset,
)


class TestParse:
    def test_binary_and_real(self):
        text = (
            '{"task_id": "a", "kind": "binary", "successes": 7, "trials": 10}\n'
            "\n"
            '{"task_id": "b", "kind": "real", "values": [0.1, 1, 0.5], "lo": 0, "hi": 1}\n'
        )
        recs = parse_dataset(text)
        assert recs[0] == TaskRecord("a", BinaryStats(7, 10))
        assert recs[1].stats.values == (0.1, 1, 0.5)
        assert recs[1].stats.hi == 1.0

    def test_bytes_and_stream(self):
        line = b'{"task_id": "a", "kind": "binary", "successes": 1, "trials": 2}\n'
        assert parse_dataset(line) == parse_dataset(io.BytesIO(line))

    def test_integral_float_counts(self):
        recs = parse_dataset('{"task_id": "a", "kind": "binary", "successes": 3.0, "trials": 4}')
        assert recs[0].stats.successes == 3

    @pytest.mark.parametrize(
        "line,where",
        [
            ('{"task_id": "a", "kind": "binary", "successes": 11, "trials": 10}', "successes"),
            ('{"task_id": "a", "kind": "binary", "successes": "x", "trials": 10}', "successes"),
            ('{"task_id": "a", "kind": "binary", "trials": 10}', "successes"),
            ('{"task_id": "", "kind": "binary", "successes": 1, "trials": 1}', "task_id"),
            ('{"task_id": "a", "kind": "ternary"}', "kind"),
            ('{"task_id": "a", "kind": "real", "values": [], "lo": 0, "hi": 1}', "values"),
            ('{"task_id": "a", "kind": "real", "values": [true], "lo": 0, "hi": 1}', "values"),
            ('{"task_id": "a", "kind": "real", "values": [2.0], "lo": 0, "hi": 1}', "values"),
            ('{"task_id": "a", "kind": "real", "values": [0.5], "lo": 0}', "hi"),
        ],
    )
    def test_field_errors(self, line, where):
        with pytest.raises(DatasetError) as err:
            parse_dataset(line)
        assert err.value.field == where
        assert err.value.line == 1

    def test_bad_json_line_number(self):
        text = '{"task_id": "a", "kind": "binary", "successes": 1, "trials": 1}\n{oops\n'
        with pytest.raises(DatasetError, match="line 2"):
            parse_dataset(text)

    def test_duplicate_ids(self):
        line = '{"task_id": "a", "kind": "binary", "successes": 1, "trials": 1}\n'
        with pytest.raises(DatasetError, match="duplicate"):
            parse_dataset(line * 2)

    def test_csv(self):
        recs = parse_dataset("task_id,successes,trials\nx,3,4\ny,0,2\n", "csv")
        assert recs == [TaskRecord("x", BinaryStats(3, 4)), TaskRecord("y", BinaryStats(0, 2))]

    def test_csv_errors(self):
        with pytest.raises(DatasetError, match="header"):
            parse_dataset("task_id,wins\nx,3\n", "csv")
        with pytest.raises(DatasetError) as err:
            parse_dataset("task_id,successes,trials\nx,3,4\ny,a,2\n", "csv")
        assert err.value.line == 3

    def test_empty(self):
        assert parse_dataset("") == []
        assert parse_dataset("", "csv") == []

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            parse_dataset("", "xml")


binary_rec = st.builds(
    lambda i, m, frac: TaskRecord(f"b{i}", BinaryStats(int(frac * m), m)),
    st.integers(0, 10**6),
    st.integers(1, 10**6),
    st.floats(0, 1),
)
real_rec = st.builds(
    lambda i, vals: TaskRecord(f"r{i}", RealStats(tuple(vals), -1.0, 2.0)),
    st.integers(0, 10**6),
    st.lists(st.floats(-1, 2, allow_nan=False), min_size=1, max_size=20),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(binary_rec, real_rec), max_size=15, unique_by=lambda r: r.task_id))
def test_jsonl_round_trip(records):
    assert parse_dataset(serialize_dataset(records)) == records


@settings(max_examples=100, deadline=None)
@given(st.lists(binary_rec, max_size=15, unique_by=lambda r: r.task_id))
def test_csv_round_trip(records):
    assert parse_dataset(serialize_dataset(records, "csv"), "csv") == records


def test_csv_rejects_real():
    with pytest.raises(ValueError):
        serialize_dataset([TaskRecord("r", RealStats((0.5,), 0, 1))], "csv")


class TestRounding:
    def test_directions(self):
        x = 0.123456789012345
        assert round_down(x) == 0.123456789012
        assert round_up(x) == 0.123456789013
        assert round_near(x) == 0.123456789012

    def test_never_overclaims(self):
        for x in (1 / 3, 2 / 3, 0.999999999999999, 1e-20):
            assert round_down(x) <= x <= round_up(x)

    def test_exact_values_kept(self):
        assert round_down(0.5) == 0.5 and round_up(1.0) == 1.0 and round_down(0.0) == 0.0


def test_certificate_dict():
    cert = Certificate(0.5, 1 / 3, 0.01, 0.001, 2, 8, 10, True, 1e-13)
    d = certificate_to_dict(cert, solve_ms=1.5)
    assert d["certified_safety"] <= 2 / 3 and d["epsilon"] >= 1 / 3
    assert d["certified_safety"] + d["epsilon"] == pytest.approx(1.0, abs=1e-11)
    assert set(d) >= {"threshold", "K_star", "k_of_B", "n", "feasible", "solver_residual", "solve_ms"}
    json.dumps(d)


def test_curve_table():
    curve = certificate_curve([0.2, 0.4, 0.4, 0.9], 0.1, 0.0)
    rows = read_table(curve_to_table(curve))
    assert [float(r["B"]) for r in rows] == [0.2, 0.4, 0.9]
    assert [int(r["k_of_B"]) for r in rows] == [0, 1, 3]
    assert rows[0]["feasible"] == "true"
    assert float(rows[0]["certified_safety"]) <= curve.certified_safety[0]


def test_dicts_to_table():
    assert dicts_to_table([]) == ""
    assert dicts_to_table([{"a": 1, "b": False}]) == "a,b\n1,false\n"


class TestAtomicWrite:
    def test_writes(self, tmp_path):
        target = tmp_path / "out.json"
        atomic_write(target, "one")
        atomic_write(target, "two")
        assert target.read_text() == "two"
        assert os.listdir(tmp_path) == ["out.json"]

    def test_failure_leaves_target(self, tmp_path):
        target = tmp_path / "out.json"
        target.write_text("old")
        with pytest.raises(TypeError):
            atomic_write(target, None)
        assert target.read_text() == "old"
        assert os.listdir(tmp_path) == ["out.json"]
