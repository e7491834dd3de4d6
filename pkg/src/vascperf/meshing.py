"""Structured simplicial meshes of the unit square/cube and embedded 1D curves.

The bulk meshes are uniform lattices: the square is split into right
triangles by the (+1,+1) diagonal of each cell, the cube into six
tetrahedra per cell by the Kuhn (Freudenthal) pattern.  Both patterns
contain every axis-aligned lattice edge, so a curve made of lattice edges
is automatically conforming (each curve segment is an edge of a bulk cell).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

# Kuhn subdivision: one tetrahedron per permutation of the coordinate axes,
# tracing a monotone lattice path from a cell's low corner to its high corner.
_KUHN_PERMS = tuple(itertools.permutations(range(3)))


@dataclass(frozen=True)
class Mesh:
    """Simplicial mesh of [0,1]^dim (or a scaled box), uniform lattice spacing h."""

    dim: int
    vertices: np.ndarray        # (nv, dim) coordinates
    cells: np.ndarray           # (nc, dim+1) vertex indices
    h: float

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    def cell_volumes(self) -> np.ndarray:
        verts = self.vertices[self.cells]
        edges = verts[:, 1:, :] - verts[:, :1, :]
        if self.dim == 2:
            det = np.linalg.det(edges)
            return np.abs(det) / 2.0
        det = np.linalg.det(edges)
        return np.abs(det) / 6.0

    def edge_set(self) -> set[tuple[int, int]]:
        """All unordered vertex pairs that are edges of some cell."""
        edges: set[tuple[int, int]] = set()
        nloc = self.cells.shape[1]
        for cell in self.cells:
            for a in range(nloc):
                for b in range(a + 1, nloc):
                    i, j = int(cell[a]), int(cell[b])
                    edges.add((i, j) if i < j else (j, i))
        return edges


@dataclass(frozen=True)
class CurveMesh:
    """1D curve embedded in a bulk mesh; every segment is a bulk-mesh edge."""

    vertices: np.ndarray        # (m, dim) coordinates
    segments: np.ndarray        # (ns, 2) indices into the curve numbering
    parent_vertex: np.ndarray   # (m,) bulk-mesh vertex index per curve vertex
    radii: np.ndarray           # (m,) positive radius per vertex
    inlet: int | None = None    # curve vertex index of the tree root, if any

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_segments(self) -> int:
        return self.segments.shape[0]

    def segment_lengths(self) -> np.ndarray:
        a = self.vertices[self.segments[:, 0]]
        b = self.vertices[self.segments[:, 1]]
        return np.linalg.norm(b - a, axis=1)

    def total_length(self) -> float:
        return float(self.segment_lengths().sum())

    def vertex_degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_vertices, dtype=int)
        np.add.at(deg, self.segments.ravel(), 1)
        return deg


def unit_square_mesh(n: int) -> Mesh:
    """Uniform triangulation of [0,1]^2 with 2*n^2 right triangles.

    Vertex (ix, iy) has index ix*(n+1) + iy; each lattice cell is split by
    the diagonal from its low corner to its high corner.
    """
    if n < 2:
        raise ValueError(f"mesh resolution must be >= 2, got {n}")
    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (ix * (n + 1) + iy).ravel()
    v10 = v00 + (n + 1)
    v01 = v00 + 1
    v11 = v10 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.vstack([lower, upper])
    return Mesh(dim=2, vertices=vertices, cells=cells, h=1.0 / n)


def unit_cube_mesh(n: int) -> Mesh:
    """Kuhn triangulation of [0,1]^3: six tetrahedra per lattice cell.

    All axis-aligned lattice edges (plus face and cell diagonals along the
    (1,1,1) direction) are mesh edges.
    """
    if n < 2:
        raise ValueError(f"mesh resolution must be >= 2, got {n}")
    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy, gz = np.meshgrid(xs, xs, xs, indexing="ij")
    vertices = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    cells = np.empty((6 * n**3, 4), dtype=np.int64)
    row = 0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                corner = np.array([i, j, k])
                for perm in _KUHN_PERMS:
                    path = [corner.copy()]
                    cur = corner.copy()
                    for axis in perm:
                        cur = cur.copy()
                        cur[axis] += 1
                        path.append(cur)
                    cells[row] = [vid(*p) for p in path]
                    row += 1
    return Mesh(dim=3, vertices=vertices, cells=cells, h=1.0 / n)


class _CurveBuilder:
    """Accumulates lattice-edge chains into a CurveMesh over a bulk mesh."""

    def __init__(self, mesh: Mesh, n: int):
        self.mesh = mesh
        self.n = n
        self.index: dict[int, int] = {}
        self.parents: list[int] = []
        self.segments: list[tuple[int, int]] = []
        self.radii: list[float] = []

    def vertex_id(self, lattice: np.ndarray) -> int:
        n = self.n
        if self.mesh.dim == 2:
            vid = int(lattice[0] * (n + 1) + lattice[1])
        else:
            vid = int((lattice[0] * (n + 1) + lattice[1]) * (n + 1) + lattice[2])
        return vid

    def add(self, lattice: np.ndarray, radius: float) -> int:
        vid = self.vertex_id(lattice)
        if vid not in self.index:
            self.index[vid] = len(self.parents)
            self.parents.append(vid)
            self.radii.append(radius)
        return self.index[vid]

    def chain(self, start: np.ndarray, stop: np.ndarray, radius: float) -> None:
        """Add unit lattice steps from start to stop (one straight run)."""
        d = stop - start
        steps = int(np.max(np.abs(d)))
        if steps == 0:
            raise ValueError("degenerate curve chain")
        step = d // steps
        if not np.all(step * steps == d):
            raise ValueError(f"chain {start}->{stop} is not a straight lattice run")
        cur = start.copy()
        a = self.add(cur, radius)
        for _ in range(steps):
            cur = cur + step
            b = self.add(cur, radius)
            self.segments.append((a, b))
            a = b

    def finish(self, inlet: int | None = None) -> CurveMesh:
        parents = np.array(self.parents, dtype=np.int64)
        return CurveMesh(
            vertices=self.mesh.vertices[parents],
            segments=np.array(self.segments, dtype=np.int64),
            parent_vertex=parents,
            radii=np.array(self.radii, dtype=float),
            inlet=inlet,
        )


def embedded_curve(mesh: Mesh, radius: float = 0.02) -> CurveMesh:
    """Branching study curve made of lattice edges (constant radius field).

    2D: vertical run {x=1/2, y in [0, 3/4]} joined at (1/2, 3/4) to the
    horizontal run {y=3/4, x in [1/4, 3/4]}; total length 5/4.
    3D: vertical run {x=y=1/2, z in [0, 3/4]} with two horizontal arms at
    z=3/4, toward +x up to x=3/4 and toward -y down to y=1/4; length 5/4.
    The junction vertex has degree 3, which breaks lattice symmetries.
    """
    n = int(round(1.0 / mesh.h))
    if n % 4 != 0:
        raise ValueError(f"curve endpoints need lattice points: n={n} not divisible by 4")
    if radius <= 0:
        raise ValueError("radius must be positive")
    b = _CurveBuilder(mesh, n)
    mid, top, quarter = n // 2, 3 * n // 4, n // 4
    if mesh.dim == 2:
        b.chain(np.array([mid, 0]), np.array([mid, top]), radius)
        b.chain(np.array([quarter, top]), np.array([mid, top]), radius)
        b.chain(np.array([mid, top]), np.array([3 * quarter, top]), radius)
    else:
        b.chain(np.array([mid, mid, 0]), np.array([mid, mid, top]), radius)
        b.chain(np.array([mid, mid, top]), np.array([3 * quarter, mid, top]), radius)
        b.chain(np.array([mid, quarter, top]), np.array([mid, mid, top]), radius)
    return b.finish()


def synthetic_vascular_tree(
    depth: int,
    box: float = 96.0,
    resolution: int = 8,
    radius_root: float = 5.0,
    seed: int = 0,
    edges_per_branch: int = 1,
) -> tuple[CurveMesh, Mesh]:
    """Seeded binary tree of lattice edges inside a cube of side `box` (microns).

    Each branch runs one horizontal lattice step in its assigned direction
    followed by vertical steps, then splits in two.  Radii halve per
    generation with a floor of 1 micron; the root vertex sits on the bottom
    face and is marked as the inlet.  Identical seeds give identical trees.
    """
    if depth < 1:
        raise ValueError("tree depth must be >= 1")
    if not (1.0 <= radius_root <= 15.0):
        raise ValueError(f"root radius {radius_root} outside the 1-15 micron range")
    mesh = unit_cube_mesh(resolution)
    mesh = Mesh(dim=3, vertices=mesh.vertices * box, cells=mesh.cells, h=box / resolution)
    n = resolution
    rng = np.random.default_rng(seed)
    builder = _CurveBuilder(mesh, n)

    horizontal = [np.array([1, 0, 0]), np.array([-1, 0, 0]),
                  np.array([0, 1, 0]), np.array([0, -1, 0])]
    up = np.array([0, 0, 1])
    occupied: set[int] = set()

    def inside(p: np.ndarray) -> bool:
        return bool(np.all(p >= 0) and np.all(p <= n))

    def branch_path(start: np.ndarray, direction: np.ndarray, generation: int):
        """Lattice path of one branch, or None if it leaves the box or collides."""
        steps = [direction] + [up] * (edges_per_branch - 1) if generation > 1 \
            else [up] * edges_per_branch
        path = [start.copy()]
        cur = start.copy()
        for step in steps:
            cur = cur + step
            if not inside(cur) or builder.vertex_id(cur) in occupied:
                return None
            path.append(cur)
        return path

    def grow(start: np.ndarray, direction: np.ndarray, generation: int) -> None:
        radius = max(radius_root * 0.5 ** (generation - 1), 1.0)
        path = branch_path(start, direction, generation)
        if path is None:
            raise ValueError(
                f"vascular tree cannot place a generation-{generation} branch at {start}"
            )
        a = builder.add(path[0], radius)
        for p in path[1:]:
            bid = builder.add(p, radius)
            builder.segments.append((a, bid))
            occupied.add(builder.vertex_id(p))
            a = bid
        tip = path[-1]
        if generation < depth:
            order = rng.permutation(len(horizontal))
            placed = 0
            for pick in order:
                if placed == 2:
                    break
                if branch_path(tip, horizontal[pick], generation + 1) is not None:
                    grow(tip.copy(), horizontal[pick], generation + 1)
                    placed += 1
            if placed < 2:
                raise ValueError("vascular tree cannot branch without self-intersection")

    root = np.array([n // 2, n // 2, 0])
    occupied.add(builder.vertex_id(root))
    grow(root, up, 1)
    curve = builder.finish(inlet=0)
    if curve.num_segments != curve.num_vertices - 1:
        raise ValueError("vascular tree self-intersects; change seed or lower depth")
    return curve, mesh


def lattice_curve(mesh: Mesh, chains: list[list[tuple]], radius: float = 0.02) -> CurveMesh:
    """Curve from straight lattice runs given as fraction-of-domain waypoints.

    Each chain is a list of points with coordinates in [0, 1] that must land
    on lattice sites; consecutive waypoints are connected by unit lattice
    steps (axis-aligned or a repeated diagonal step).
    """
    n = int(round((mesh.vertices.max() - mesh.vertices.min()) / mesh.h))
    builder = _CurveBuilder(mesh, n)
    for chain in chains:
        pts = [np.array([int(round(c * n)) for c in p]) for p in chain]
        for a, b in zip(pts[:-1], pts[1:]):
            builder.chain(a, b, radius)
    return builder.finish()


def curve_edges_conform(curve: CurveMesh, mesh: Mesh) -> bool:
    """Check that every curve segment is an edge of the bulk mesh."""
    edges = mesh.edge_set()
    for s in curve.segments:
        i, j = int(curve.parent_vertex[s[0]]), int(curve.parent_vertex[s[1]])
        key = (i, j) if i < j else (j, i)
        if key not in edges:
            return False
    return True
