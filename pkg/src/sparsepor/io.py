"""Dataset CSV files and flat ``key = value`` text files.

Floats are written with ``repr`` (shortest round-tripping decimal), so a
read after a write reproduces every value exactly.
"""

from __future__ import annotations

import csv

import numpy as np

from .core import Dataset, InvalidInputError, TreatmentKind, TreatmentSpec


def write_dataset(path: str, dataset: Dataset) -> None:
    """Columns ``x_1..x_d``, then ``a`` or ``a_1..a_k``, then ``y`` and ``fold``."""
    spec = dataset.spec
    header = [f"x_{j + 1}" for j in range(dataset.d)]
    header += ["a"] if spec.is_single else [f"a_{j + 1}" for j in range(spec.k)]
    header += ["y", "fold"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.x[i]]
            row += [str(int(dataset.a[i]))] if spec.is_single else [str(int(v)) for v in dataset.a[i]]
            row += [repr(float(dataset.y[i])), str(int(dataset.fold[i]))]
            w.writerow(row)


def read_dataset(path: str, k: int | None = None) -> Dataset:
    """Read a dataset CSV. For single treatments ``k`` defaults to the largest level seen."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    acols = [i for i, h in enumerate(header) if h == "a" or h.startswith("a_")]
    expected_x = [f"x_{j + 1}" for j in range(len(xcols))]
    if [header[i] for i in xcols] != expected_x or "y" not in header or "fold" not in header:
        raise InvalidInputError(f"{path}: header must be x_1..x_d, a or a_1..a_k, y, fold")
    if not xcols or not acols:
        raise InvalidInputError(f"{path}: missing covariate or treatment columns")
    single = [header[i] for i in acols] == ["a"]
    if not single and [header[i] for i in acols] != [f"a_{j + 1}" for j in range(len(acols))]:
        raise InvalidInputError(f"{path}: treatment columns must be 'a' or a_1..a_k")
    iy, ifold = header.index("y"), header.index("fold")
    if any(len(r) != len(header) for r in body):
        raise InvalidInputError(f"{path}: ragged rows")
    try:
        x = np.array([[float(r[i]) for i in xcols] for r in body]).reshape(len(body), len(xcols))
        y = np.array([float(r[iy]) for r in body])
        fold = np.array([int(r[ifold]) for r in body], dtype=np.int64)
        a = np.array([[int(r[i]) for i in acols] for r in body], dtype=np.int64).reshape(
            len(body), len(acols))
    except ValueError as exc:
        raise InvalidInputError(f"{path}: {exc}") from exc
    if single:
        a = a[:, 0]
        kk = k if k is not None else int(a.max(initial=1))
        spec = TreatmentSpec(TreatmentKind.SINGLE, kk)
    else:
        if k is not None and k != len(acols):
            raise InvalidInputError(f"{path}: file has {len(acols)} treatment columns, not {k}")
        spec = TreatmentSpec(TreatmentKind.VECTOR, len(acols))
    return Dataset(spec, x, a, y, fold)


def format_value(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(format_value(u) for u in v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if hasattr(v, "value"):  # enums
        return str(v.value)
    return str(v)


def write_kv(path: str, items: dict) -> None:
    """Write ``key = value`` lines in insertion order."""
    with open(path, "w") as fh:
        for key, value in items.items():
            fh.write(f"{key} = {format_value(value)}\n")


def read_kv(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidInputError(f"{path}: expected 'key = value', got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
