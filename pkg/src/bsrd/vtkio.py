"""Legacy ASCII VTK output for bulk and surface snapshots."""

from __future__ import annotations

import numpy as np

VTK_TET = 10
VTK_TRIANGLE = 5


def write_vtk_unstructured(path, points, cells, cell_type: int,
                           point_data: dict[str, np.ndarray] | None = None,
                           title: str = "bsrd output") -> None:
    """Write one unstructured grid in legacy VTK 2.0 ASCII format.

    ``cells`` is an (m, k) integer array indexing into ``points``;
    ``cell_type`` is the VTK cell type id (10 for tetrahedra, 5 for
    triangles).  ``point_data`` maps field names to per-point scalars.
    """
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    n_points = points.shape[0]
    n_cells, nodes_per_cell = cells.shape
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n_points} double\n")
        for x, y, z in points:
            fh.write(f"{x:.10g} {y:.10g} {z:.10g}\n")
        fh.write(f"CELLS {n_cells} {n_cells * (nodes_per_cell + 1)}\n")
        for cell in cells:
            fh.write(f"{nodes_per_cell} " + " ".join(str(int(v)) for v in cell) + "\n")
        fh.write(f"CELL_TYPES {n_cells}\n")
        for _ in range(n_cells):
            fh.write(f"{cell_type}\n")
        if point_data:
            fh.write(f"POINT_DATA {n_points}\n")
            for name, values in point_data.items():
                values = np.asarray(values, dtype=float)
                if values.shape != (n_points,):
                    raise ValueError(
                        f"point data {name!r} has shape {values.shape}, "
                        f"expected ({n_points},)")
                fh.write(f"SCALARS {name} double\n")
                fh.write("LOOKUP_TABLE default\n")
                for v in values:
                    fh.write(f"{v:.10g}\n")


def write_bulk_snapshot(path, mesh, u, v, title: str = "bulk fields") -> None:
    """Tetrahedral grid with point data u, v."""
    write_vtk_unstructured(path, mesh.vertices, mesh.tets, VTK_TET,
                           point_data={"u": u, "v": v}, title=title)


def write_surface_snapshot(path, mesh, r, s, title: str = "surface fields") -> None:
    """Surface triangles re-indexed to surface points, with data r, s."""
    write_vtk_unstructured(path, mesh.surface_coords(), mesh.surface_tris_local(),
                           VTK_TRIANGLE, point_data={"r": r, "s": s}, title=title)


def write_mesh_vtk(path_bulk, path_surface, mesh, title: str = "ball mesh") -> None:
    """Geometry-only export of the bulk and induced surface grids."""
    write_vtk_unstructured(path_bulk, mesh.vertices, mesh.tets, VTK_TET, title=title)
    write_vtk_unstructured(path_surface, mesh.surface_coords(),
                           mesh.surface_tris_local(), VTK_TRIANGLE, title=title)
