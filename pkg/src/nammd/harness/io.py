"""Dataset loading and result emission."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from nammd.errors import CSVParseError, InputError


@dataclass
class ResultRow:
    """One cell of an experiment table.

    Rejection-rate experiments fill ``rejection_rate``/``stderr``/``std``;
    sweeps and oracle checks fill ``value`` (and ``reference`` when a closed
    form exists). ``std`` is the spread over outer repeats, or the per-run
    Bernoulli standard deviation when there is a single outer repeat.
    """

    experiment: str
    cell: int
    setting: str
    method: str
    m: int | None = None
    epsilon: float | None = None
    alpha: float | None = None
    repetitions: int | None = None
    rejection_rate: float | None = None
    stderr: float | None = None
    std: float | None = None
    statistic_mean: float | None = None
    statistic_std: float | None = None
    p_value_median: float | None = None
    value: float | None = None
    reference: float | None = None
    error: str | None = None
    wall_clock_s: float | None = None


COLUMNS = tuple(f.name for f in fields(ResultRow))


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def _read_rows(path):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CSVParseError(f"cannot open {path}: {exc}") from None
    with fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r)]
    if not rows:
        raise CSVParseError("file has no data rows", line=1)
    # header: first row has a non-numeric token
    if not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise CSVParseError("file has a header but no data rows", line=2)
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for k, (line, r) in enumerate(rows):
        if len(r) != width:
            raise CSVParseError(f"expected {width} columns, found {len(r)}", line=line)
        for j, c in enumerate(r):
            try:
                v = float(c)
            except ValueError:
                raise CSVParseError(f"column {j + 1} is not numeric: {c!r}", line=line) from None
            if not math.isfinite(v):
                raise CSVParseError(f"column {j + 1} is not finite: {c!r}", line=line)
            data[k, j] = v
    return data


def load_csv(path):
    """Numeric CSV to an ``(m, d)`` array, one point per row; header row optional."""
    return _read_rows(path)


def load_labeled_csv(path):
    """CSV whose last column labels the sample; returns ``(X, Y)`` for the two labels."""
    data = _read_rows(path)
    if data.shape[1] < 2:
        raise CSVParseError("labeled file needs at least one feature column and a label", line=1)
    labels = np.unique(data[:, -1])
    if labels.size != 2:
        raise InputError(f"expected exactly two labels, found {labels.size}")
    X = data[data[:, -1] == labels[0], :-1]
    Y = data[data[:, -1] == labels[1], :-1]
    return X, Y


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_results(rows, fmt="csv"):
    """Serialize rows with a fixed column order; identical rows give identical text."""
    if not rows:
        raise InputError("no result rows to emit")
    records = [{c: getattr(r, c) for c in COLUMNS} for r in rows]
    if fmt == "json":
        return json.dumps(records, indent=2) + "\n"
    if fmt != "csv":
        raise InputError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for rec in records:
        w.writerow([_cell(rec[c]) for c in COLUMNS])
    return buf.getvalue()


def emit_results(rows, path, fmt="csv"):
    """Write rows atomically (temporary file then rename) and return the path."""
    text = render_results(rows, fmt)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".results-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
