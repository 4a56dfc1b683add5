"""CSV and JSON readers/writers used by the command line."""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .errors import ContractViolation


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_points_csv(path):
    """Read an (n, d) array from a comma-separated file.

    The first row is taken as a header when any of its cells is not a number.
    Raises FileNotFoundError for a missing file and ContractViolation naming
    the row and column of the first bad cell.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
        first = 2
    else:
        first = 1
    if not rows:
        raise ContractViolation(f"{path}: no data rows")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ContractViolation(f"{path}: row {i + first} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ContractViolation(f"{path}: non-numeric value {cell!r} at row {i + first}, column {j + 1}") from None
            if not math.isfinite(v):
                raise ContractViolation(f"{path}: non-finite value at row {i + first}, column {j + 1}")
            out[i, j] = v
    return out


def _fmt(v):
    return format(float(v), ".17g")


def estimates_csv(x, estimates, oracle=None):
    """Text of the estimates table: x_*, thetahat_*, then oracle_* if given."""
    d = x.shape[1]
    header = [f"x_{k + 1}" for k in range(d)] + [f"thetahat_{k + 1}" for k in range(d)]
    blocks = [x, estimates]
    if oracle is not None:
        header += [f"oracle_{k + 1}" for k in range(d)]
        blocks.append(oracle)
    table = np.hstack(blocks)
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in table]
    return "\n".join(lines) + "\n"


def dumps(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContractViolation(f"{path}: invalid JSON ({exc})") from exc
