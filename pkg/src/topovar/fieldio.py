"""Plain-text interchange format for gridded fields.

A file holds one field. Two header lines describe the grid and the columns;
every following line is one node in C order: its coordinates, then the
components (all ``n x n`` entries for rank-2 fields, row major). Floats are
written with 17 significant digits so a round trip is exact.

    # topovar-field n=2 counts=5,5 bounds=0:1,0:1 periodic=0,0 valence=0,2 signature=0,2
    # columns x0 x1 c00 c01 c10 c11
"""

from __future__ import annotations

import io
import os
from typing import Union

import numpy as np

from .chart import MetricField, ScalarField, TensorField, build_grid
from .errors import ConfigurationError

MAGIC = "topovar-field"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _valence(field) -> tuple:
    if isinstance(field, ScalarField):
        return (0, 0)
    if isinstance(field, MetricField):
        return (0, 2)
    return tuple(field.valence)


def _header(field) -> str:
    grid = field.grid
    valence = _valence(field)
    parts = [
        MAGIC,
        f"n={grid.dim}",
        "counts=" + ",".join(str(c) for c in grid.counts),
        "bounds=" + ",".join(f"{_fmt(a)}:{_fmt(b)}" for a, b in grid.bounds),
        "periodic=" + ",".join(str(int(p)) for p in grid.periodic),
        f"valence={valence[0]},{valence[1]}",
    ]
    if isinstance(field, MetricField):
        parts.append(f"signature={field.signature[0]},{field.signature[1]}")
    return "# " + " ".join(parts)


def _component_names(n: int, rank: int) -> list:
    if rank == 0:
        return ["value"]
    if rank == 1:
        return [f"c{a}" for a in range(n)]
    return [f"c{a}{b}" for a in range(n) for b in range(n)]


def write_field(field, path_or_buf: Union[str, os.PathLike, io.TextIOBase]) -> None:
    """Write a scalar, tensor or metric field."""
    grid = field.grid
    n = grid.dim
    if isinstance(field, ScalarField):
        comps = field.values.reshape(grid.size, 1)
        rank = 0
    else:
        rank = sum(_valence(field))
        if rank > 2:
            raise ConfigurationError("only fields of rank <= 2 can be written")
        comps = field.components.reshape(grid.size, -1)
    coords = grid.coords().reshape(grid.size, n)
    cols = [f"x{i}" for i in range(n)] + _component_names(n, rank)
    lines = [_header(field), "# columns " + " ".join(cols)]
    for x, c in zip(coords, comps):
        lines.append(" ".join(_fmt(v) for v in np.concatenate([x, c])))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="ascii") as fh:
            fh.write(text)


def _parse_header(line: str) -> dict:
    if not line.startswith("#"):
        raise ConfigurationError("field file must start with a '#' header line")
    tokens = line[1:].split()
    if not tokens or tokens[0] != MAGIC:
        raise ConfigurationError(f"not a {MAGIC} file")
    meta = {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise ConfigurationError(f"malformed header token {tok!r}")
        key, val = tok.split("=", 1)
        meta[key] = val
    missing = {"n", "counts", "bounds", "periodic", "valence"} - set(meta)
    if missing:
        raise ConfigurationError(f"header lacks {sorted(missing)}")
    return meta


def read_field(path_or_buf):
    """Read a field written by :func:`write_field`.

    Returns a MetricField when the header carries a signature, otherwise a
    ScalarField or TensorField.
    """
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        with open(path_or_buf, encoding="ascii") as fh:
            text = fh.read()
    lines = text.splitlines()
    if len(lines) < 2:
        raise ConfigurationError("field file is truncated")
    meta = _parse_header(lines[0])
    n = int(meta["n"])
    counts = tuple(int(c) for c in meta["counts"].split(","))
    bounds = tuple(tuple(float(v) for v in b.split(":")) for b in meta["bounds"].split(","))
    periodic = tuple(bool(int(p)) for p in meta["periodic"].split(","))
    valence = tuple(int(v) for v in meta["valence"].split(","))
    if not (len(counts) == len(bounds) == len(periodic) == n):
        raise ConfigurationError("header entries disagree with n")
    grid = build_grid(list(bounds), list(counts), list(periodic))
    if not lines[1].startswith("# columns"):
        raise ConfigurationError("second line must list the columns")
    cols = lines[1].split()[2:]
    rank = sum(valence)
    ncomp = len(_component_names(n, rank))
    if len(cols) != n + ncomp:
        raise ConfigurationError(f"expected {n + ncomp} columns, header lists {len(cols)}")
    data = np.loadtxt(io.StringIO("\n".join(lines[2:])), ndmin=2)
    if data.shape != (grid.size, n + ncomp):
        raise ConfigurationError(f"expected {grid.size} rows of {n + ncomp} values, got {data.shape}")
    coords = data[:, :n].reshape(grid.shape + (n,))
    if not np.allclose(coords, grid.coords(), rtol=0, atol=1e-12 * max(1.0, max(abs(v) for b in bounds for v in b))):
        raise ConfigurationError("node coordinates do not match the header grid")
    comps = data[:, n:]
    if rank == 0:
        return ScalarField(grid, comps.reshape(grid.shape))
    shape = grid.shape + (n,) * rank
    comps = comps.reshape(shape)
    if "signature" in meta:
        sig = tuple(int(v) for v in meta["signature"].split(","))
        return MetricField(grid, comps, sig)
    return TensorField(grid, valence, comps)
