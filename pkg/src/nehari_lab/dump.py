"""Atomic file output, grid dumps and CSV formatting."""

from __future__ import annotations

import csv
import io
import os
import tempfile

import numpy as np

from .errors import FieldShapeError


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value):
    """17 significant digits for reals, plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return ""
    return str(value)


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(row.get(k)) for k in header])
    return buf.getvalue()


def key_value_text(items):
    return "".join(f"{k}={fmt(v)}\n" for k, v in items.items())


def columns_text(header, columns):
    """Whitespace separated columns with a ``#`` header line (gnuplot friendly)."""
    lines = ["# " + " ".join(header)]
    for row in zip(*columns):
        lines.append(" ".join(fmt(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def grid_dump_text(grid, u):
    """``# kind n h d`` followed by ``ix iy v_1 ... v_d`` for every free node."""
    u = np.asarray(u, dtype=float)
    if u.ndim == len(grid.shape):
        u = u[None]
    d = u.shape[0]
    grid.check_field(u, d)
    lines = [f"# {grid.kind} {grid.n} {fmt(grid.h)} {d}"]
    if grid.is_radial:
        idx = [(int(i), 0) for i in np.flatnonzero(grid.mask)]
    else:
        iy, ix = np.nonzero(grid.mask)
        idx = list(zip(ix.tolist(), iy.tolist()))
    for ix, iy in idx:
        vals = u[:, ix] if grid.is_radial else u[:, iy, ix]
        lines.append(f"{ix} {iy} " + " ".join(fmt(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def write_grid_dump(path, grid, u):
    write_atomic(path, grid_dump_text(grid, u))


def read_grid_dump(path, grid, d=None):
    """Load a grid dump onto ``grid``; kind, ``n``, ``h`` and ``d`` must match."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != "#":
            raise FieldShapeError(f"{path}: malformed grid-dump header")
        kind, n, h, dd = header[1], int(header[2]), float(header[3]), int(header[4])
        if kind != grid.kind or n != grid.n or not np.isclose(h, grid.h, rtol=1e-12, atol=0):
            raise FieldShapeError(f"{path}: dump is for {kind} n={n} h={h}, grid is {grid.kind} n={grid.n}")
        if d is not None and dd != d:
            raise FieldShapeError(f"{path}: dump has d={dd}, expected {d}")
        u = grid.zeros(dd)
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            ix, iy = int(parts[0]), int(parts[1])
            vals = [float(x) for x in parts[2:]]
            if len(vals) != dd:
                raise FieldShapeError(f"{path}: expected {dd} values per node")
            if grid.is_radial:
                u[:, ix] = vals
            else:
                u[:, iy, ix] = vals
    return u
