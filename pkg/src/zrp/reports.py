"""Deterministic JSON/CSV report files.

JSON documents carry ``"schema": 1`` first, then fields in the order the
caller built them. Floats are written with ``repr`` so repeated runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInput

SCHEMA = 1


class ReportError(InvalidInput):
    """A report file could not be written."""


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def to_json(record: dict) -> str:
    doc = {"schema": SCHEMA}
    doc.update(_plain(record))
    return json.dumps(doc, indent=2) + "\n"


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(_plain(v))


def to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def to_dat(rows: Sequence[dict], x: str, y: str) -> str:
    lines = [f"# {x} {y}"] + [f"{_cell(r[x])} {_cell(r[y])}" for r in rows]
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from None


def emit_report(results, fmt: str = "json", out: str | Path | None = None,
                columns: Sequence[str] | None = None,
                dat_columns: tuple[str, str] | None = None) -> list[Path]:
    """Write ``results`` as JSON (a dict) or CSV (a list of row dicts).

    With ``dat_columns`` a two-column gnuplot file is written next to the CSV
    (same stem, ``.dat``). ``out=None`` prints to stdout. Returns the paths written.
    """
    if not results:
        raise InvalidInput("nothing to report")
    if fmt == "json":
        record = results if isinstance(results, dict) else {"rows": list(results)}
        text = to_json(record)
    elif fmt == "csv":
        rows = results["rows"] if isinstance(results, dict) else list(results)
        if not rows:
            raise InvalidInput("nothing to report")
        columns = list(columns or rows[0].keys())
        text = to_csv(rows, columns)
    else:
        raise InvalidInput(f"unknown report format {fmt!r}")
    if out is None:
        sys.stdout.write(text)
        return []
    path = Path(out)
    _write(path, text)
    written = [path]
    if dat_columns and fmt == "csv":
        dat = path.with_suffix(".dat")
        _write(dat, to_dat(rows, *dat_columns))
        written.append(dat)
    return written
