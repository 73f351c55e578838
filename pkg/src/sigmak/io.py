"""Deterministic CSV/JSON writers and field export.

Floats are formatted with repr (shortest round-trip), so identical inputs
produce byte-identical files.
"""

import json
import os

import numpy as np


def _fmt(x):
    if isinstance(x, (np.floating, float)):
        return repr(float(x))
    if isinstance(x, (np.integer, int)):
        return str(int(x))
    if isinstance(x, (np.bool_, bool)):
        return "true" if x else "false"
    return str(x)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return path


def write_json(path, obj):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)}")


def field_to_csv(path, grid, values, component_names=None):
    """Flattened field export: index, coordinates, then components."""
    values = np.asarray(values)
    pts = grid.points().reshape(-1, grid.n)
    flat = values.reshape(grid.num_points, -1)
    ncomp = flat.shape[1]
    if component_names is None:
        component_names = (
            ["value"] if ncomp == 1 else [f"c{i}" for i in range(ncomp)]
        )
    header = ["index"] + [f"x{a+1}" for a in range(grid.n)] + list(component_names)
    rows = (
        [i] + list(pts[i]) + list(flat[i]) for i in range(grid.num_points)
    )
    return write_csv(path, header, rows)
