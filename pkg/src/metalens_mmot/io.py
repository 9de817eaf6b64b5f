"""Plain-text readers and writers: CSV tables, plain PGM images, JSON summaries.

Floats are written with ``repr`` so files round-trip exactly and are
byte-identical across runs.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domains import Grid


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(format_value(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def read_csv_table(path, columns: Sequence[str]) -> np.ndarray:
    """Read a headed numeric CSV and return the requested columns in order."""
    with open(path, encoding="utf-8") as fh:
        header = [h.strip() for h in fh.readline().strip().split(",")]
        missing = [c for c in columns if c not in header]
        if missing:
            raise ValueError(f"{path}: missing column(s) {missing}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: {data.shape[1]} values per row but {len(header)} header fields")
    return data[:, [header.index(c) for c in columns]]


def read_node_values(path, grid: Grid, atol: float = 1e-9) -> np.ndarray:
    """Values from an ``x,y,value`` CSV whose rows follow the grid's node order."""
    table = read_csv_table(path, ("x", "y", "value"))
    if table.shape[0] != grid.size:
        raise ValueError(f"{path}: {table.shape[0]} rows for a {grid.size}-node grid")
    if not np.allclose(table[:, :2], grid.nodes, rtol=0, atol=atol):
        raise ValueError(f"{path}: coordinates do not match the grid nodes in row-major order")
    return table[:, 2].copy()


# --------------------------------------------------------------------------
# artifact tables


def potentials_csv(values: np.ndarray, grid: Grid) -> str:
    x = grid.nodes
    return csv_text(("x", "y", "value"), zip(x[:, 0], x[:, 1], values))


def maps_csv(maps) -> str:
    """``x,y,T2x,T2y,...,multiplicity``; marginals are numbered from 1 in the header."""
    x = maps.grids[0].nodes
    header = ["x", "y"]
    cols = [x[:, 0], x[:, 1]]
    for k in range(maps.targets.shape[1]):
        header += [f"T{k + 2}x", f"T{k + 2}y"]
        t = maps.target_coords(k)
        cols += [t[:, 0], t[:, 1]]
    header.append("multiplicity")
    cols.append(maps.multiplicity.astype(int))
    return csv_text(header, zip(*cols))


def phase_csv(phase) -> str:
    x = phase.grid.nodes
    p = phase.grad
    return csv_text(("x", "y", "phix", "phiy", "phiz", "curl"),
                    zip(x[:, 0], x[:, 1], p[:, 0], p[:, 1], p[:, 2], phase.curl))


def trace_csv(trace) -> str:
    """Per-sweep functional value and conjugacy defect; wall time is left out so reruns match."""
    return csv_text(("sweep", "value", "defect"), ((r.sweep, r.value, r.defect) for r in trace.records))


# --------------------------------------------------------------------------
# images


def pgm_text(values: np.ndarray, grid: Grid):
    """Plain P2 image, 8-bit, linearly scaled min -> 0 and max -> 255 over finite values.

    NaN pixels map to 0. The top image row is the largest ``y``. Returns
    ``(text, {"min": lo, "max": hi})``.
    """
    img = np.asarray(values, dtype=float).reshape(grid.shape)[::-1]
    finite = np.isfinite(img)
    if np.any(finite):
        lo, hi = float(img[finite].min()), float(img[finite].max())
    else:
        lo = hi = 0.0
    span = hi - lo
    scaled = np.zeros(img.shape, dtype=int)
    if span > 0:
        scaled[finite] = np.rint((img[finite] - lo) / span * 255.0).astype(int)
    ny, nx = grid.shape
    lines = ["P2", f"{nx} {ny}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in scaled)
    return "\n".join(lines) + "\n", {"min": lo, "max": hi}


def read_pgm(path) -> np.ndarray:
    tokens = [t for line in Path(path).read_text().splitlines()
              if not line.startswith("#") for t in line.split()]
    if tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array([int(t) for t in tokens[4:]], dtype=int)
    if data.size != nx * ny or data.max(initial=0) > maxval:
        raise ValueError(f"{path}: malformed pixel data")
    return data.reshape(ny, nx)


# --------------------------------------------------------------------------
# JSON


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def json_text(obj) -> str:
    """Sorted keys, two-space indent; non-finite floats become null."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
