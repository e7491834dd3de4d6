"""Legacy-VTK ASCII writers for meshes, curves, and vertex fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .meshing import CurveMesh, Mesh

_CELL_TYPES = {2: 5, 3: 10}  # triangle, tetrahedron


def _write_points(lines: list[str], vertices: np.ndarray) -> None:
    lines.append(f"POINTS {vertices.shape[0]} double")
    for v in vertices:
        x, y = v[0], v[1]
        z = v[2] if v.shape[0] == 3 else 0.0
        lines.append(f"{x:.12g} {y:.12g} {z:.12g}")


def _write_point_data(lines: list[str], fields: dict[str, np.ndarray], npoints: int) -> None:
    if not fields:
        return
    lines.append(f"POINT_DATA {npoints}")
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape[0] != npoints:
            raise ValueError(f"field {name!r} has {values.shape[0]} values for {npoints} points")
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{v:.12g}" for v in values)


def write_mesh_vtk(path: str | Path, mesh: Mesh,
                   point_data: dict[str, np.ndarray] | None = None) -> None:
    lines = ["# vtk DataFile Version 3.0", "vascperf mesh", "ASCII",
             "DATASET UNSTRUCTURED_GRID"]
    _write_points(lines, mesh.vertices)
    nloc = mesh.cells.shape[1]
    lines.append(f"CELLS {mesh.num_cells} {mesh.num_cells * (nloc + 1)}")
    for cell in mesh.cells:
        lines.append(" ".join([str(nloc)] + [str(int(v)) for v in cell]))
    lines.append(f"CELL_TYPES {mesh.num_cells}")
    lines.extend([str(_CELL_TYPES[mesh.dim])] * mesh.num_cells)
    _write_point_data(lines, point_data or {}, mesh.num_vertices)
    Path(path).write_text("\n".join(lines) + "\n")


def write_curve_vtk(path: str | Path, curve: CurveMesh,
                    point_data: dict[str, np.ndarray] | None = None) -> None:
    lines = ["# vtk DataFile Version 3.0", "vascperf curve", "ASCII",
             "DATASET UNSTRUCTURED_GRID"]
    _write_points(lines, curve.vertices)
    ns = curve.num_segments
    lines.append(f"CELLS {ns} {ns * 3}")
    for a, b in curve.segments:
        lines.append(f"2 {int(a)} {int(b)}")
    lines.append(f"CELL_TYPES {ns}")
    lines.extend(["3"] * ns)  # VTK_LINE
    data = dict(point_data or {})
    data.setdefault("radius", curve.radii)
    _write_point_data(lines, data, curve.num_vertices)
    Path(path).write_text("\n".join(lines) + "\n")
