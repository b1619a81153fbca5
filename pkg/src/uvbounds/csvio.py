"""CSV emission helpers.

Dialect: comma separator, '.' decimal point, LF line endings, mandatory
header row. Floats print in scientific notation with 17 significant
digits so binary doubles round-trip losslessly.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Surface

__all__ = ["fmt", "write_csv", "surface_to_csv", "read_csv"]


def fmt(value) -> str:
    """Render one cell: lossless scientific notation for floats."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".16e")
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def surface_to_csv(surface: Surface, path) -> None:
    """Surface layout: header of z-coordinates, first column x-coordinates."""
    z = surface.grid.z_nodes()
    x = surface.grid.x_nodes()
    header = ["x"] + [fmt(v) for v in z]
    rows = ([x[i]] + list(surface.values[i, :]) for i in range(surface.grid.n_x))
    write_csv(path, header, rows)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Read back (header, rows) as raw strings; mainly for tests."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]
