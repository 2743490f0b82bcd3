"""CSV matrix/vector files: rows of decimal floats, no header, 17 significant digits."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def write_matrix(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        for row in A:
            w.writerow([format_float(v) for v in row])


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ValueError(f"{path}: ragged rows (lengths {sorted(width)})")
    return np.array(rows, dtype=np.float64)


def write_vector(path, x) -> None:
    write_matrix(path, np.asarray(x, dtype=np.float64).reshape(-1, 1))


def read_vector(path) -> np.ndarray:
    """Accepts a single row or a single column."""
    A = read_matrix(path)
    if A.shape[0] != 1 and A.shape[1] != 1:
        raise ValueError(f"{path}: expected a single row or column, got shape {A.shape}")
    return A.reshape(-1)
