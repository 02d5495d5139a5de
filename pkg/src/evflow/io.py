"""Round-trip-exact CSV and binary serialization helpers."""
import csv
import numbers
from pathlib import Path

import numpy as np


def format_value(value):
    """Render a value for CSV: 17 significant digits for floats, no locale."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Complex) and not isinstance(value, numbers.Real):
        return f"{format(value.real, '.17g')}{format(value.imag, '+.17g')}j"
    if isinstance(value, numbers.Real):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, rows):
    """Write ``rows`` under ``header``; returns the path written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def save_matrix_csv(path, matrix):
    """Row-major CSV dump of a real or complex matrix (no header)."""
    matrix = np.atleast_2d(np.asarray(matrix))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in matrix:
            writer.writerow([format_value(v) for v in row.tolist()])
    return path


def load_matrix_csv(path):
    with open(path, newline="", encoding="ascii") as fh:
        rows = [r for r in csv.reader(fh)]
    if any("j" in cell for row in rows for cell in row):
        return np.array([[complex(c) for c in row] for row in rows])
    return np.array([[float(c) for c in row] for row in rows])


def save_matrix(path, matrix):
    """Dense binary container (``.npy``)."""
    path = Path(path)
    if path.suffix != ".npy":
        path = path.with_name(path.name + ".npy")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, np.asarray(matrix), allow_pickle=False)
    return path


def load_matrix(path):
    return np.load(path, allow_pickle=False)
