"""CSV files for grid functions, masks and Hermite expansions; JSON reports.

Grid files start with a comment line describing the grid, then a header::

    # grid dim=2 half_extent=8 points_per_axis=128
    i0,i1,re,im
    0,0,1.2e-30,0

Rows are in row-major (C) order. Mask files use the column ``mask`` (0/1)
instead of ``re,im``. Expansion files::

    # hermite dim=1 lambda=1 cutoff=3
    nu_1,re,im
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .hermite import HermiteExpansion, multi_indices
from .numgrid import GridError, GridFunction, IndicatorSet, UniformGrid


def _fmt(x: float) -> str:
    return repr(float(x))


def _grid_comment(grid: UniformGrid) -> str:
    return f"# grid dim={grid.dim} half_extent={_fmt(grid.half_extent)} points_per_axis={grid.points_per_axis}"


def _parse_comment(line: str, kind: str) -> dict:
    if not line.startswith(f"# {kind} "):
        raise GridError(f"expected a '# {kind} ...' first line, got {line.strip()!r}")
    return dict(re.findall(r"(\w+)=(\S+)", line))


def _index_columns(shape) -> np.ndarray:
    return np.indices(shape).reshape(len(shape), -1).T


def write_grid_function(path, f: GridFunction) -> None:
    g = f.grid
    idx = _index_columns(g.shape)
    vals = f.values.ravel()
    head = ",".join([f"i{k}" for k in range(g.dim)] + ["re", "im"])
    lines = [_grid_comment(g), head]
    for row, v in zip(idx, vals):
        lines.append(",".join([str(int(i)) for i in row] + [_fmt(v.real), _fmt(v.imag)]))
    Path(path).write_text("\n".join(lines) + "\n")


def _read_table(path, kind: str):
    text = Path(path).read_text().splitlines()
    if len(text) < 2:
        raise GridError(f"{path}: file too short")
    meta = _parse_comment(text[0], kind)
    header = text[1].split(",")
    data = np.loadtxt(text[2:], delimiter=",", ndmin=2) if len(text) > 2 else np.zeros((0, len(header)))
    return meta, header, data


def _grid_from_meta(meta: dict) -> UniformGrid:
    try:
        return UniformGrid(int(meta["dim"]), float(meta["half_extent"]), int(meta["points_per_axis"]))
    except KeyError as exc:
        raise GridError(f"grid comment misses {exc}") from None


def _place(grid: UniformGrid, idx: np.ndarray, vals: np.ndarray, dtype):
    out = np.zeros(grid.shape, dtype=dtype)
    if idx.size:
        if np.any(idx < 0) or np.any(idx >= grid.points_per_axis):
            raise GridError("cell index outside the grid")
        out[tuple(idx.T)] = vals
    return out


def read_grid_function(path) -> GridFunction:
    meta, header, data = _read_table(path, "grid")
    grid = _grid_from_meta(meta)
    expect = [f"i{k}" for k in range(grid.dim)] + ["re", "im"]
    if header != expect:
        raise GridError(f"{path}: header {header} should be {expect}")
    idx = data[:, : grid.dim].astype(int)
    vals = data[:, grid.dim] + 1j * data[:, grid.dim + 1]
    return GridFunction(grid, _place(grid, idx, vals, complex))


def write_mask(path, s: IndicatorSet) -> None:
    g = s.grid
    head = ",".join([f"i{k}" for k in range(g.dim)] + ["mask"])
    lines = [_grid_comment(g), head]
    for row, m in zip(_index_columns(g.shape), s.mask.ravel()):
        lines.append(",".join([str(int(i)) for i in row] + [str(int(m))]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mask(path) -> IndicatorSet:
    meta, header, data = _read_table(path, "grid")
    grid = _grid_from_meta(meta)
    expect = [f"i{k}" for k in range(grid.dim)] + ["mask"]
    if header != expect:
        raise GridError(f"{path}: header {header} should be {expect}")
    idx = data[:, : grid.dim].astype(int)
    m = data[:, grid.dim]
    if np.any((m != 0) & (m != 1)):
        raise GridError(f"{path}: mask entries must be 0 or 1")
    return IndicatorSet(grid, _place(grid, idx, m.astype(bool), bool))


def write_expansion(path, c: HermiteExpansion) -> None:
    head = ",".join([f"nu_{k + 1}" for k in range(c.dim)] + ["re", "im"])
    lines = [f"# hermite dim={c.dim} lambda={_fmt(c.scale)} cutoff={c.cutoff}", head]
    for nu, v in zip(c.indices, c.coeffs):
        lines.append(",".join([str(k) for k in nu] + [_fmt(v.real), _fmt(v.imag)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_expansion(path) -> HermiteExpansion:
    meta, header, data = _read_table(path, "hermite")
    dim, cutoff, lam = int(meta["dim"]), int(meta["cutoff"]), float(meta["lambda"])
    order = multi_indices(dim, cutoff)
    rows = [tuple(int(v) for v in r[:dim]) for r in data]
    if rows != order:
        raise ValueError(f"{path}: rows are not the graded-lex indices up to degree {cutoff}")
    return HermiteExpansion(dim, lam, cutoff, data[:, dim] + 1j * data[:, dim + 1])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v).replace(",", ";")
