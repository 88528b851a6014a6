"""Dataset ingestion and machine-readable emission.

Two dataset layouts are accepted:

``jsonl``
    One task per line, either
    ``{"task_id": "t1", "kind": "binary", "successes": 7, "trials": 10}`` or
    ``{"task_id": "t2", "kind": "real", "values": [...], "lo": 0, "hi": 1}``.
``csv``
    Binary data only, with header ``task_id,successes,trials``.

Numbers are written with 12 significant digits. Certified safety is always
rounded toward zero and epsilon away from zero, so a printed certificate
never claims more than the computed one.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from decimal import ROUND_CEILING, ROUND_FLOOR, Context, Decimal
from typing import IO, Iterable, Sequence, Union

from mtcert.bounds import BinaryStats, RealStats, TaskRecord
from mtcert.certify import Certificate, CertificateCurve, EpisodicCertificate

SIG_DIGITS = 12
FORMATS = ("jsonl", "csv")
CURVE_COLUMNS = ("B", "certified_safety", "epsilon", "k_of_B", "K_star", "feasible")


class DatasetError(ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = field


def _text(source: Union[IO, bytes, str]) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _int_field(rec: dict, name: str, line: int) -> int:
    if name not in rec:
        raise DatasetError("missing", line, name)
    v = rec[name]
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            return int(v)
        raise DatasetError(f"expected an integer, got {v!r}", line, name)
    return v


def _float_field(rec: dict, name: str, line: int) -> float:
    if name not in rec:
        raise DatasetError("missing", line, name)
    v = rec[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DatasetError(f"expected a number, got {v!r}", line, name)
    return float(v)


def _record_from_dict(rec: dict, line: int) -> TaskRecord:
    if not isinstance(rec, dict):
        raise DatasetError("expected a JSON object", line)
    task_id = rec.get("task_id")
    if not isinstance(task_id, str) or not task_id:
        raise DatasetError("must be a nonempty string", line, "task_id")
    kind = rec.get("kind")
    if kind == "binary":
        s = _int_field(rec, "successes", line)
        m = _int_field(rec, "trials", line)
        try:
            stats = BinaryStats(s, m)
        except ValueError as exc:
            raise DatasetError(f"task {task_id!r}: {exc}", line, "successes") from None
    elif kind == "real":
        values = rec.get("values")
        if not isinstance(values, list) or not values:
            raise DatasetError("expected a nonempty list of numbers", line, "values")
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
            raise DatasetError("expected a nonempty list of numbers", line, "values")
        lo = _float_field(rec, "lo", line)
        hi = _float_field(rec, "hi", line)
        try:
            stats = RealStats(tuple(values), lo, hi)
        except ValueError as exc:
            raise DatasetError(f"task {task_id!r}: {exc}", line, "values") from None
    else:
        raise DatasetError(f"expected 'binary' or 'real', got {kind!r}", line, "kind")
    return TaskRecord(task_id, stats)


def _parse_jsonl(text: str) -> list[TaskRecord]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON ({exc.msg})", lineno) from None
        out.append((lineno, _record_from_dict(rec, lineno)))
    return _check_unique(out)


def _parse_csv(text: str) -> list[TaskRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return []
    missing = {"task_id", "successes", "trials"} - set(reader.fieldnames)
    if missing:
        raise DatasetError(f"header lacks {sorted(missing)}", 1)
    out = []
    for row in reader:
        lineno = reader.line_num
        rec = {"task_id": row["task_id"], "kind": "binary"}
        for name in ("successes", "trials"):
            try:
                rec[name] = int(row[name])
            except (TypeError, ValueError):
                raise DatasetError(f"expected an integer, got {row[name]!r}", lineno, name) from None
        out.append((lineno, _record_from_dict(rec, lineno)))
    return _check_unique(out)


def _check_unique(numbered) -> list[TaskRecord]:
    seen = {}
    for lineno, rec in numbered:
        if rec.task_id in seen:
            raise DatasetError(
                f"duplicate task_id {rec.task_id!r} (first seen on line {seen[rec.task_id]})",
                lineno,
                "task_id",
            )
        seen[rec.task_id] = lineno
    return [rec for _, rec in numbered]


def parse_dataset(source: Union[IO, bytes, str], fmt: str = "jsonl") -> list[TaskRecord]:
    """Parse a dataset, preserving record order."""
    text = _text(source)
    if fmt == "jsonl":
        return _parse_jsonl(text)
    if fmt == "csv":
        return _parse_csv(text)
    raise ValueError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")


def record_to_dict(rec: TaskRecord) -> dict:
    st = rec.stats
    if isinstance(st, BinaryStats):
        return {"task_id": rec.task_id, "kind": "binary", "successes": st.successes, "trials": st.trials}
    return {"task_id": rec.task_id, "kind": "real", "values": list(st.values), "lo": st.lo, "hi": st.hi}


def serialize_dataset(records: Sequence[TaskRecord], fmt: str = "jsonl") -> str:
    if fmt == "jsonl":
        return "".join(json.dumps(record_to_dict(r)) + "\n" for r in records)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task_id", "successes", "trials"])
        for r in records:
            if not isinstance(r.stats, BinaryStats):
                raise ValueError(f"task {r.task_id!r}: csv datasets hold binary data only")
            w.writerow([r.task_id, r.stats.successes, r.stats.trials])
        return buf.getvalue()
    raise ValueError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")


def atomic_write(path: Union[str, os.PathLike], text: str) -> None:
    """Write via a temporary file in the same directory and rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def round_down(x: float, digits: int = SIG_DIGITS) -> float:
    return float(Context(prec=digits, rounding=ROUND_FLOOR).create_decimal(Decimal(x)))


def round_up(x: float, digits: int = SIG_DIGITS) -> float:
    return float(Context(prec=digits, rounding=ROUND_CEILING).create_decimal(Decimal(x)))


def round_near(x: float, digits: int = SIG_DIGITS) -> float:
    return float(f"{x:.{digits}g}")


def certificate_to_dict(cert: Certificate, solve_ms: float | None = None) -> dict:
    out = {
        "threshold": round_near(cert.threshold),
        "epsilon": round_up(cert.epsilon),
        "certified_safety": round_down(cert.certified_safety),
        "delta": cert.delta,
        "beta": cert.beta,
        "k_of_B": cert.k_of_B,
        "K_star": cert.K_star,
        "n": cert.n,
        "feasible": cert.feasible,
        "solver_residual": round_near(cert.solver_residual),
    }
    if solve_ms is not None:
        out["solve_ms"] = round_near(solve_ms)
    return out


def episodic_to_dict(cert: EpisodicCertificate) -> dict:
    return {
        "threshold": round_near(cert.threshold),
        "certified_safety": round_down(cert.certified_safety),
        "epsilon": round_up(cert.epsilon),
        "delta": cert.delta,
        "successes": cert.successes,
        "n": cert.n,
    }


def _table(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return v


def dicts_to_table(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    header = list(rows[0])
    return _table(header, ([r[h] for h in header] for r in rows))


def curve_rows(curve: CertificateCurve) -> list[tuple]:
    return [
        (
            round_near(B),
            round_down(c.certified_safety),
            round_up(c.epsilon),
            c.k_of_B,
            c.K_star,
            c.feasible,
        )
        for B, c in curve.breakpoints
    ]


def curve_to_table(curve: CertificateCurve) -> str:
    return _table(CURVE_COLUMNS, curve_rows(curve))


def read_table(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
