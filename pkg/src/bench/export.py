# export.py - CSV and VTK output of convergence runs and fields
"""
Run tables go to CSV through pandas with 17 significant digits, so that
reading a table back recovers every float exactly. Fields go to legacy
ASCII VTK with each P2 triangle split into four linear triangles.
"""

import os

import numpy as np
import pandas as pd

from src.core.logger import get_logger
from src.bench.convergence import CSV_COLUMNS

FLOAT_FORMAT = "%.17g"
HISTORY_COLUMNS = ("iteration", "cost", "gap", "step", "newton_iterations")


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.exists(parent):
        os.makedirs(parent)


def records_frame(records):
    """DataFrame with the fixed convergence-table columns"""
    return pd.DataFrame([r.as_row() for r in records], columns=list(CSV_COLUMNS))


def export_csv(records, path):
    """Write RunRecords with the fixed header; an empty list gives a header-only file"""
    logger = get_logger()
    _ensure_parent(path)
    frame = records_frame(records)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.system(f"Wrote {len(frame)} records to {path}")
    return path


def read_csv(path):
    return pd.read_csv(path, float_precision="round_trip")


def export_history_csv(history, path):
    """Write the conditional-gradient iterate history of one run"""
    _ensure_parent(path)
    frame = pd.DataFrame(
        [(it.iteration, it.cost, it.gap, it.step, it.newton_iterations) for it in history],
        columns=list(HISTORY_COLUMNS),
    )
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    get_logger().system(f"Wrote {len(frame)} iterates to {path}")
    return path


def _linear_cells(space):
    """(4T, 3) linear triangles over the P2 nodes"""
    n = space.element_nodes
    v0, v1, v2, m0, m1, m2 = (n[:, k] for k in range(6))
    cells = np.stack([
        np.column_stack([v0, m2, m1]),
        np.column_stack([m2, v1, m0]),
        np.column_stack([m1, m0, v2]),
        np.column_stack([m0, m1, m2]),
    ], axis=1)
    return cells.reshape(-1, 3)


def _nodal_pressure(f):
    """P1 pressure at all P2 nodes"""
    space = f.space
    topo = space.mesh.edges()
    p = f.pressure
    return np.concatenate([p, 0.5 * (p[topo.edges[:, 0]] + p[topo.edges[:, 1]])])


def export_vtk(fields, path, title="ns_bangbang fields"):
    """Legacy ASCII VTK of THFunctions sharing one space.

    `fields` maps a name (e.g. "state", "adjoint") to a THFunction; each
    contributes the point data <name>_velocity and <name>_pressure.
    """
    logger = get_logger()
    if not fields:
        raise ValueError("export_vtk needs at least one field")
    spaces = {id(f.space) for f in fields.values()}
    if len(spaces) != 1:
        raise ValueError("all exported fields must share one space")
    space = next(iter(fields.values())).space

    points = space.node_coords
    cells = _linear_cells(space)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {points.shape[0]} double",
    ]
    lines.extend(f"{x:.17g} {y:.17g} 0" for x, y in points)
    lines.append(f"CELLS {cells.shape[0]} {4 * cells.shape[0]}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in cells)
    lines.append(f"CELL_TYPES {cells.shape[0]}")
    lines.extend("5" for _ in range(cells.shape[0]))
    lines.append(f"POINT_DATA {points.shape[0]}")
    for name, f in fields.items():
        velocity = f.velocity.T
        lines.append(f"VECTORS {name}_velocity double")
        lines.extend(f"{u:.17g} {v:.17g} 0" for u, v in velocity)
        lines.append(f"SCALARS {name}_pressure double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{q:.17g}" for q in _nodal_pressure(f))

    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
    logger.system(f"Wrote VTK with {len(fields)} field(s) to {path}")
    return path
