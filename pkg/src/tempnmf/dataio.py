"""Reading count matrices and masks from disk."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

FORMATS = ("dense-csv", "sparse-triplet")


class DataError(ValueError):
    pass


def _number(tok: str, path, lineno: int) -> float:
    try:
        x = float(tok)
    except ValueError:
        raise DataError(f"{path}:{lineno}: cannot parse {tok!r} as a number") from None
    if not np.isfinite(x):
        raise DataError(f"{path}:{lineno}: non-finite value {tok!r}")
    if x < 0:
        raise DataError(f"{path}:{lineno}: negative value {x:g}")
    return x


def _read_dense(path, header: bool) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not t.strip() for t in row):
                continue
            vals = [_number(t.strip(), path, lineno) for t in row]
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataError(f"{path}:{lineno}: expected {width} fields, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def _read_triplets(path) -> np.ndarray:
    V = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if V is None:
                parts = s.lstrip("#").split()
                if not s.startswith("#") or len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: first line must declare the shape as '# F N'")
                try:
                    F, N = int(parts[0]), int(parts[1])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: shape must be two integers") from None
                if F < 1 or N < 1:
                    raise DataError(f"{path}:{lineno}: shape must be positive, got {F} x {N}")
                V = np.zeros((F, N))
                continue
            if s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 'f n value', found {len(parts)} fields")
            try:
                f, n = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: indices must be integers") from None
            if not (0 <= f < V.shape[0] and 0 <= n < V.shape[1]):
                raise DataError(f"{path}:{lineno}: index ({f}, {n}) outside declared shape {V.shape}")
            # repeated coordinates accumulate, as in COO sparse formats
            V[f, n] += _number(parts[2], path, lineno)
    if V is None:
        raise DataError(f"{path}: empty file")
    return V


def load_count_matrix(path, fmt: str = "dense-csv", header: bool = False) -> np.ndarray:
    """Load an F x N non-negative matrix.

    ``dense-csv``: comma-separated rows, optionally after one header line.
    ``sparse-triplet``: a ``# F N`` line then ``f n value`` lines with
    0-based indices; absent entries are zero.
    """
    path = Path(path)
    if fmt == "dense-csv":
        return _read_dense(path, header)
    if fmt == "sparse-triplet":
        return _read_triplets(path)
    raise DataError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def load_mask(path, shape=None, header: bool = False) -> np.ndarray:
    """Dense CSV of 0/1 entries (1 = observed)."""
    m = _read_dense(Path(path), header)
    if not np.all((m == 0) | (m == 1)):
        raise DataError(f"{path}: mask entries must be 0 or 1")
    if shape is not None and m.shape != tuple(shape):
        raise DataError(f"{path}: mask shape {m.shape} does not match data shape {tuple(shape)}")
    return m
