"""Tetrahedral meshes of the unit ball with induced surface triangulation.

The generator starts from an icosahedron-based seed (twelve unit vertices
plus the center, twenty tetrahedra) and refines uniformly: each
tetrahedron is split into eight children through its edge midpoints, with
the central octahedral cell cut along its shortest diagonal.  After every
refinement pass the boundary vertices are projected back onto the unit
sphere, so the induced surface triangulation approximates the sphere at
first order while sharing its vertices with the bulk mesh.

A plain-text node/element exchange format and statistics helpers live here
as well; legacy VTK output is in :mod:`bsrd.vtkio`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

#: Vertices of the induced surface must satisfy | ||x|| - 1 | <= this.
GEOM_TOL = 1e-12

#: Refinements beyond this would allocate tens of millions of cells.
MAX_REFINEMENT_LEVEL = 7


class MeshError(ValueError):
    """Raised for structurally or geometrically invalid meshes."""


@dataclass(frozen=True)
class BulkSurfaceMesh:
    """Tetrahedral bulk mesh plus the surface triangulation it induces.

    ``surface_tris`` indexes into the shared vertex array; the surface
    degrees of freedom are a re-indexing of the boundary vertices given by
    ``surface_vertex_ids`` (sorted) and ``bulk_to_surface`` (-1 for
    interior vertices).
    """

    vertices: np.ndarray
    tets: np.ndarray
    surface_tris: np.ndarray
    surface_vertex_ids: np.ndarray
    bulk_to_surface: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_surface_vertices(self) -> int:
        return self.surface_vertex_ids.shape[0]

    def surface_coords(self) -> np.ndarray:
        return self.vertices[self.surface_vertex_ids]

    def surface_tris_local(self) -> np.ndarray:
        """Surface triangles re-indexed to surface degrees of freedom."""
        return self.bulk_to_surface[self.surface_tris]

    @classmethod
    def from_tets(cls, vertices, tets) -> "BulkSurfaceMesh":
        """Build the induced surface structure from raw tetrahedra."""
        vertices = np.ascontiguousarray(np.asarray(vertices, dtype=float))
        tets = np.ascontiguousarray(np.asarray(tets, dtype=np.int64))
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if tets.ndim != 2 or tets.shape[1] != 4:
            raise MeshError("tets must have shape (m, 4)")
        if tets.size and (tets.min() < 0 or tets.max() >= len(vertices)):
            raise MeshError("tet indices out of range")
        tris = boundary_faces(tets)
        tris = _orient_outward(vertices, tris)
        surf_ids = np.unique(tris)
        b2s = np.full(len(vertices), -1, dtype=np.int64)
        b2s[surf_ids] = np.arange(len(surf_ids))
        return cls(vertices=vertices, tets=tets, surface_tris=tris,
                   surface_vertex_ids=surf_ids, bulk_to_surface=b2s)


def tet_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volumes of all tetrahedra."""
    p = vertices[tets]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    c = p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0


def triangle_areas(vertices: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = vertices[tris]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return 0.5 * np.linalg.norm(n, axis=1)


def boundary_faces(tets: np.ndarray) -> np.ndarray:
    """Faces that belong to exactly one tetrahedron, outward-ordered.

    Faces are emitted with the vertex order that makes their normal point
    out of the owning tetrahedron (valid for positively oriented tets).
    Raises ``MeshError`` when a face is shared by more than two tets.
    """
    tets = np.asarray(tets, dtype=np.int64)
    # Outward-ordered faces of a positively oriented tet (v0, v1, v2, v3).
    local = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))
    count: dict[tuple[int, int, int], int] = {}
    ordered: dict[tuple[int, int, int], tuple[int, int, int]] = {}
    offenders = []
    for tet in tets:
        for i, j, k in local:
            face = (int(tet[i]), int(tet[j]), int(tet[k]))
            key = tuple(sorted(face))
            seen = count.get(key, 0)
            count[key] = seen + 1
            if seen == 0:
                ordered[key] = face
            elif seen >= 2:
                offenders.append(key)
    if offenders:
        raise MeshError(f"non-manifold faces shared by >2 tets: {sorted(set(offenders))}")
    faces = [ordered[key] for key, n in count.items() if n == 1]
    faces.sort()
    return np.array(faces, dtype=np.int64).reshape(-1, 3)


def _orient_outward(vertices: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Flip surface triangles whose normal points towards the origin."""
    if tris.size == 0:
        return tris
    p = vertices[tris]
    normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    centroids = p.mean(axis=1)
    flip = np.einsum("ij,ij->i", normals, centroids) < 0.0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _fix_orientation(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    vols = tet_volumes(vertices, tets)
    if np.any(vols == 0.0):
        bad = np.flatnonzero(vols == 0.0)
        raise MeshError(f"degenerate tetrahedra (zero volume): {bad.tolist()}")
    tets = tets.copy()
    neg = vols < 0.0
    tets[neg] = tets[neg][:, [0, 1, 3, 2]]
    return tets


def _seed_mesh() -> tuple[np.ndarray, np.ndarray]:
    """Icosahedron vertices on the unit sphere plus the center, one tet per
    face; 20 tets, 20 boundary triangles."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    raw = np.array([
        [0.0, 1.0, phi], [0.0, -1.0, phi], [0.0, 1.0, -phi], [0.0, -1.0, -phi],
        [1.0, phi, 0.0], [-1.0, phi, 0.0], [1.0, -phi, 0.0], [-1.0, -phi, 0.0],
        [phi, 0.0, 1.0], [-phi, 0.0, 1.0], [phi, 0.0, -1.0], [-phi, 0.0, -1.0],
    ])
    shell = raw / np.linalg.norm(raw, axis=1)[:, None]
    faces = ConvexHull(shell).simplices
    vertices = np.vstack([shell, [[0.0, 0.0, 0.0]]])
    center = len(vertices) - 1
    tets = np.hstack([np.full((len(faces), 1), center, dtype=np.int64),
                      faces.astype(np.int64)])
    return vertices, _fix_orientation(vertices, tets)

# Octahedron diagonals of the midpoint cell, as index pairs into
# (m01, m02, m03, m12, m13, m23), with the matching equator cycle.
_OCT_DIAGONALS = (
    ((0, 5), (1, 2, 4, 3)),   # m01-m23, equator m02 m03 m13 m12
    ((1, 4), (0, 2, 5, 3)),   # m02-m13, equator m01 m03 m23 m12
    ((2, 3), (0, 1, 5, 4)),   # m03-m12, equator m01 m02 m23 m13
)


def _refine(vertices: np.ndarray, tets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One pass of uniform 1-to-8 refinement through edge midpoints."""
    verts = list(vertices)
    midpoint: dict[tuple[int, int], int] = {}

    def mid(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        idx = midpoint.get(key)
        if idx is None:
            idx = len(verts)
            verts.append(0.5 * (vertices[i] + vertices[j]))
            midpoint[key] = idx
        return idx

    children = np.empty((8 * len(tets), 4), dtype=np.int64)
    n = 0
    for v0, v1, v2, v3 in tets:
        m = (mid(v0, v1), mid(v0, v2), mid(v0, v3),
             mid(v1, v2), mid(v1, v3), mid(v2, v3))
        children[n:n + 4] = [
            (v0, m[0], m[1], m[2]),
            (v1, m[0], m[3], m[4]),
            (v2, m[1], m[3], m[5]),
            (v3, m[2], m[4], m[5]),
        ]
        n += 4
        # Cut the central octahedron along its shortest diagonal.
        best = None
        for (d0, d1), equator in _OCT_DIAGONALS:
            length = np.sum((verts[m[d0]] - verts[m[d1]]) ** 2)
            if best is None or length < best[0]:
                best = (length, (d0, d1), equator)
        _, (d0, d1), eq = best
        for i in range(4):
            children[n] = (m[d0], m[d1], m[eq[i]], m[eq[(i + 1) % 4]])
            n += 1
    return np.array(verts), children


def _project_boundary(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    tris = boundary_faces(tets)
    ids = np.unique(tris)
    vertices = vertices.copy()
    norms = np.linalg.norm(vertices[ids], axis=1)
    vertices[ids] = vertices[ids] / norms[:, None]
    return vertices


def generate_ball_mesh(refinement_level: int) -> BulkSurfaceMesh:
    """Nested tetrahedral triangulation of the unit ball.

    Level 0 is the seed (8 tets); each level multiplies the cell count by
    eight and projects boundary vertices onto the sphere.  Levels above
    ``MAX_REFINEMENT_LEVEL`` are rejected.
    """
    if refinement_level < 0:
        raise ValueError(f"refinement_level must be >= 0, got {refinement_level}")
    if refinement_level > MAX_REFINEMENT_LEVEL:
        raise ValueError(
            f"refinement_level {refinement_level} exceeds guard "
            f"{MAX_REFINEMENT_LEVEL}")
    vertices, tets = _seed_mesh()
    for _ in range(refinement_level):
        vertices, tets = _refine(vertices, tets)
        vertices = _project_boundary(vertices, tets)
        tets = _fix_orientation(vertices, tets)
    mesh = BulkSurfaceMesh.from_tets(vertices, tets)
    validate_ball_mesh(mesh)
    return mesh


def extract_surface(mesh: BulkSurfaceMesh) -> np.ndarray:
    """Boundary triangulation of the mesh; identical to the stored one.

    Recomputes the boundary faces from the tetrahedra and verifies they
    match ``mesh.surface_tris``.  Raises ``MeshError`` on a non-manifold
    boundary.
    """
    tris = _orient_outward(mesh.vertices, boundary_faces(mesh.tets))
    if tris.shape != mesh.surface_tris.shape or not np.array_equal(
            np.sort(tris, axis=1), np.sort(mesh.surface_tris, axis=1)):
        raise MeshError("stored surface triangulation does not match the "
                        "boundary of the tetrahedral mesh")
    return mesh.surface_tris


def _surface_edges(tris: np.ndarray) -> dict[tuple[int, int], int]:
    edges: dict[tuple[int, int], int] = {}
    for a, b, c in tris:
        for i, j in ((a, b), (b, c), (c, a)):
            key = (int(i), int(j)) if i < j else (int(j), int(i))
            edges[key] = edges.get(key, 0) + 1
    return edges


def validate_ball_mesh(mesh: BulkSurfaceMesh, geom_tol: float = GEOM_TOL) -> None:
    """Check every structural and geometric invariant of a ball mesh.

    Verifies positive tet volumes, the surface/vertex bookkeeping, the
    on-sphere placement of boundary vertices, outward normals, closed
    orientable surface topology (Euler characteristic 2, every edge in
    exactly two triangles), and the bulk-to-surface bijection.
    """
    vols = tet_volumes(mesh.vertices, mesh.tets)
    if np.any(vols <= 0.0):
        bad = np.flatnonzero(vols <= 0.0)
        raise MeshError(f"non-positive tet volumes at {bad.tolist()[:10]}")

    tris = mesh.surface_tris
    referenced = np.unique(tris)
    if not np.array_equal(referenced, mesh.surface_vertex_ids):
        raise MeshError("surface_vertex_ids do not match the vertices "
                        "referenced by surface_tris")

    norms = np.linalg.norm(mesh.surface_coords(), axis=1)
    off = np.abs(norms - 1.0)
    if off.size and off.max() > geom_tol:
        raise MeshError(f"surface vertex off the unit sphere by {off.max():.3e}")

    ids = mesh.surface_vertex_ids
    b2s = mesh.bulk_to_surface
    if b2s.shape[0] != mesh.n_vertices:
        raise MeshError("bulk_to_surface has wrong length")
    if not np.array_equal(b2s[ids], np.arange(len(ids))):
        raise MeshError("bulk_to_surface is not the sorted re-indexing "
                        "of surface_vertex_ids")
    interior = np.setdiff1d(np.arange(mesh.n_vertices), ids)
    if interior.size and np.any(b2s[interior] != -1):
        raise MeshError("bulk_to_surface marks interior vertices")

    edges = _surface_edges(tris)
    bad_edges = [e for e, n in edges.items() if n != 2]
    if bad_edges:
        raise MeshError(f"surface edges not shared by exactly 2 triangles: "
                        f"{bad_edges[:10]}")
    euler = len(ids) - len(edges) + len(tris)
    if euler != 2:
        raise MeshError(f"surface Euler characteristic {euler}, expected 2")

    p = mesh.vertices[tris]
    normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    outward = np.einsum("ij,ij->i", normals, p.mean(axis=1))
    if np.any(outward <= 0.0):
        raise MeshError("surface triangle normals must point away from the origin")


@dataclass(frozen=True)
class MeshStats:
    n_vertices: int
    n_tets: int
    n_surface_tris: int
    n_surface_vertices: int
    h_min: float
    h_max: float
    volume: float
    area: float

    def __str__(self) -> str:
        return ("vertices {0.n_vertices}, tets {0.n_tets}, "
                "surface tris {0.n_surface_tris} on {0.n_surface_vertices} vertices, "
                "h in [{0.h_min:.4g}, {0.h_max:.4g}], "
                "volume {0.volume:.6g}, area {0.area:.6g}".format(self))


def mesh_stats(mesh: BulkSurfaceMesh) -> MeshStats:
    """Counts, edge-length range, total volume and surface area."""
    edges = set()
    for tet in mesh.tets:
        t = sorted(int(v) for v in tet)
        for i in range(4):
            for j in range(i + 1, 4):
                edges.add((t[i], t[j]))
    idx = np.array(sorted(edges), dtype=np.int64)
    lengths = np.linalg.norm(mesh.vertices[idx[:, 0]] - mesh.vertices[idx[:, 1]], axis=1)
    return MeshStats(
        n_vertices=mesh.n_vertices,
        n_tets=mesh.tets.shape[0],
        n_surface_tris=mesh.surface_tris.shape[0],
        n_surface_vertices=mesh.n_surface_vertices,
        h_min=float(lengths.min()),
        h_max=float(lengths.max()),
        volume=float(tet_volumes(mesh.vertices, mesh.tets).sum()),
        area=float(triangle_areas(mesh.vertices, mesh.surface_tris).sum()),
    )


def save_mesh_text(mesh: BulkSurfaceMesh, path) -> None:
    """Write the node/element exchange format (vertices + tets).

    The surface triangulation is reconstructed on load, so only the bulk
    connectivity is stored.
    """
    with open(path, "w") as fh:
        fh.write("# bulk-surface ball mesh, plain-text node/element format\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{float(x):.17g} {float(y):.17g} {float(z):.17g}\n")
        fh.write(f"tets {mesh.tets.shape[0]}\n")
        for a, b, c, d in mesh.tets:
            fh.write(f"{a} {b} {c} {d}\n")


def load_mesh_text(path) -> BulkSurfaceMesh:
    """Read the node/element format and validate all ball-mesh invariants."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh
                 if ln.strip() and not ln.lstrip().startswith("#")]
    pos = 0

    def expect_header(keyword: str) -> int:
        nonlocal pos
        if pos >= len(lines):
            raise MeshError(f"unexpected end of file, expected '{keyword} <count>'")
        parts = lines[pos].split()
        if len(parts) != 2 or parts[0] != keyword:
            raise MeshError(f"expected '{keyword} <count>', got {lines[pos]!r}")
        pos += 1
        return int(parts[1])

    nv = expect_header("vertices")
    if pos + nv > len(lines):
        raise MeshError("vertex block truncated")
    vertices = np.array([[float(t) for t in lines[pos + i].split()] for i in range(nv)])
    pos += nv
    nt = expect_header("tets")
    if pos + nt > len(lines):
        raise MeshError("tet block truncated")
    tets = np.array([[int(t) for t in lines[pos + i].split()] for i in range(nt)],
                    dtype=np.int64)
    mesh = BulkSurfaceMesh.from_tets(vertices, tets)
    validate_ball_mesh(mesh)
    return mesh
