"""CSV emission with fixed formatting so reruns are byte-identical."""

from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path
from typing import Sequence

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def write_csv(path: str | Path, header: Sequence[str], columns: Sequence) -> Path:
    """Write equal-length columns under ``header``; LF line endings, 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c) for c in columns]
    if len(cols) != len(header):
        raise ValueError("header and column count differ")
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("columns have different lengths")
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(fmt(c[i]) for c in cols) + "\n")
    return path


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a file written by :func:`write_csv` back into float columns."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
