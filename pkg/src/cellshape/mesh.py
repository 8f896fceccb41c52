"""Triangulated multi-material domain, red refinement and mesh quality.

Vertex numbering is nested: red refinement keeps coarse vertex ``i`` as fine
vertex ``i`` and appends one midpoint per coarse edge, so coordinates of any
coarser level are a prefix of the finest level's coordinate array.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .errors import ElementInversion, GeometryError

# relative threshold for the inversion test (times the median initial area)
INVERSION_RTOL = 1e-14


class BoundaryTag(enum.IntEnum):
    TOP = 0
    BOTTOM = 1
    SIDE = 2


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """P1 triangle mesh with subdomain ids and outer-boundary markers.

    ``subdomain_id`` 0 is the bulk material, ``k >= 1`` a cell type.
    Markers are stored by connectivity only and are never recomputed from
    coordinates.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    subdomain_id: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, np.float64).reshape(-1, 2))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "subdomain_id", _frozen(self.subdomain_id, np.int64))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", _frozen(self.boundary_tags, np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    # -- connectivity ---------------------------------------------------------

    @cached_property
    def _edge_data(self):
        tri = self.triangles
        local = np.array([[0, 1], [1, 2], [2, 0]])
        half = tri[:, local].reshape(-1, 2)  # oriented half-edges, 3 per triangle
        key = np.sort(half, axis=1)
        edges, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        tri_edges = inverse.reshape(-1, 3)
        owner = np.repeat(np.arange(len(tri)), 3)
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        # first occurrence in slot 0, second in slot 1
        order = np.argsort(inverse, kind="stable")
        sorted_e = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_e[1:] != sorted_e[:-1]
        edge_tris[sorted_e[first], 0] = owner[order[first]]
        second = ~first
        if np.any(np.bincount(sorted_e, minlength=len(edges)) > 2):
            raise GeometryError("non-manifold mesh: an edge is shared by more than two triangles")
        edge_tris[sorted_e[second], 1] = owner[order[second]]
        return edges, tri_edges, edge_tris, half

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges ``(E, 2)``, endpoints sorted."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Edge index of local edges (01, 12, 20) per triangle."""
        return self._edge_data[1]

    @property
    def edge_triangles(self) -> np.ndarray:
        """Up to two triangles adjacent to each edge, ``-1`` for none."""
        return self._edge_data[2]

    @cached_property
    def interface(self):
        """Interface edges oriented with the cell on the left.

        Returns ``(edges, cell_triangle)``; for an edge ``i -> j`` the unit
        normal ``(t_y, -t_x)`` points out of the cell.
        """
        edges, tri_edges, edge_tris, half = self._edge_data
        t0, t1 = edge_tris[:, 0], edge_tris[:, 1]
        inner = t1 >= 0
        s0 = np.where(t0 >= 0, self.subdomain_id[t0], -1)
        s1 = np.where(inner, self.subdomain_id[np.maximum(t1, 0)], -1)
        mixed = inner & ((s0 == 0) != (s1 == 0))
        idx = np.nonzero(mixed)[0]
        cell_tri = np.where(s0[idx] != 0, t0[idx], t1[idx])
        # locate the half-edge of the cell triangle on this edge (CCW order)
        local = np.argmax(tri_edges[cell_tri] == idx[:, None], axis=1)
        oriented = half.reshape(-1, 3, 2)[cell_tri, local]
        return oriented, cell_tri

    @property
    def interface_edges(self) -> np.ndarray:
        return self.interface[0]

    def interface_normals(self) -> np.ndarray:
        """Unit normals on interface edges, pointing out of the cells."""
        e = self.interface_edges
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        d /= np.linalg.norm(d, axis=1)[:, None]
        return np.column_stack([d[:, 1], -d[:, 0]])

    def boundary_vertices(self, tag) -> np.ndarray:
        """Sorted vertex indices lying on edges carrying ``tag``."""
        sel = self.boundary_edges[self.boundary_tags == int(tag)]
        return np.unique(sel)

    # -- geometry -------------------------------------------------------------

    @cached_property
    def geometry(self):
        """``(grads, signed_area)`` of the P1 basis on each triangle."""
        return kernels.triangle_geometry(self.vertices, self.triangles)

    @property
    def signed_areas(self) -> np.ndarray:
        return self.geometry[1]

    def subdomain_areas(self) -> dict:
        a = self.signed_areas
        return {int(k): float(a[self.subdomain_id == k].sum()) for k in np.unique(self.subdomain_id)}

    def with_vertices(self, vertices) -> "Mesh":
        return Mesh(vertices, self.triangles, self.subdomain_id, self.boundary_edges, self.boundary_tags)

    # -- invariants -----------------------------------------------------------

    def validate(self) -> None:
        """Raise ``GeometryError`` if any structural invariant is violated."""
        area = self.signed_areas
        if np.any(area <= 0.0):
            bad = int(np.argmin(area))
            raise GeometryError(f"triangle {bad} has non-positive signed area {area[bad]:.3e}")
        edges, _, edge_tris, _ = self._edge_data
        t0, t1 = edge_tris[:, 0], edge_tris[:, 1]
        inner = t1 >= 0
        s0 = self.subdomain_id[t0]
        s1 = self.subdomain_id[np.maximum(t1, 0)]
        touching = inner & (s0 != 0) & (s1 != 0) & (s0 != s1)
        if np.any(touching):
            raise GeometryError("two distinct cell subdomains share an edge")
        topo = {tuple(e) for e in edges[~inner]}
        marked = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        if topo != marked:
            raise GeometryError("boundary markers do not match the topological boundary")


@dataclass(frozen=True, eq=False)
class MeshHierarchy:
    """Nested uniform refinements; ``levels[0]`` is the coarsest.

    ``parent_maps[l]`` has one row per edge of ``levels[l]``: the fine vertex
    ``levels[l].n_vertices + e`` bisects coarse edge ``parent_maps[l][e]``.
    """

    levels: tuple
    parent_maps: tuple = field(default=())

    @property
    def finest(self) -> Mesh:
        return self.levels[-1]

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @classmethod
    def from_coarse(cls, mesh: Mesh, refinements: int) -> "MeshHierarchy":
        levels, maps = [mesh], []
        for _ in range(refinements):
            fine, pmap = refine_uniform(levels[-1])
            levels.append(fine)
            maps.append(pmap)
        return cls(tuple(levels), tuple(maps))

    def with_fine_vertices(self, vertices) -> "MeshHierarchy":
        """Move the finest level to ``vertices``; coarse vertices follow their fine images."""
        vertices = np.asarray(vertices, dtype=np.float64)
        levels = tuple(m.with_vertices(vertices[: m.n_vertices]) for m in self.levels)
        return MeshHierarchy(levels, self.parent_maps)


def refine_uniform(mesh: Mesh):
    """Red refinement: split every triangle into four via edge midpoints.

    Returns ``(fine_mesh, parent_map)`` where ``parent_map`` is the coarse
    edge array; fine vertex ``V + e`` is the midpoint of coarse edge ``e``.
    """
    nv = mesh.n_vertices
    edges = mesh.edges
    te = mesh.triangle_edges + nv  # midpoint vertex ids for edges 01, 12, 20
    tri = mesh.triangles
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    m01, m12, m20 = te[:, 0], te[:, 1], te[:, 2]
    children = np.stack(
        [
            np.column_stack([a, m01, m20]),
            np.column_stack([m01, b, m12]),
            np.column_stack([m20, m12, c]),
            np.column_stack([m01, m12, m20]),
        ],
        axis=1,
    ).reshape(-1, 3)
    sub = np.repeat(mesh.subdomain_id, 4)

    # boundary edges: look up the midpoint by the sorted key
    be = mesh.boundary_edges
    key = np.sort(be, axis=1)
    pos = _edge_lookup(edges, key)
    mid = pos + nv
    fine_be = np.stack([np.column_stack([be[:, 0], mid]), np.column_stack([mid, be[:, 1]])], axis=1).reshape(-1, 2)
    fine_tags = np.repeat(mesh.boundary_tags, 2)
    fine = Mesh(vertices, children, sub, fine_be, fine_tags)
    return fine, edges.copy()


def _edge_lookup(edges, keys):
    """Indices of ``keys`` rows in the sorted unique ``edges`` array."""
    n = int(max(edges.max(), keys.max())) + 1
    code_e = edges[:, 0] * n + edges[:, 1]
    code_k = keys[:, 0] * n + keys[:, 1]
    pos = np.searchsorted(code_e, code_k)
    if np.any(pos >= len(code_e)) or np.any(code_e[np.minimum(pos, len(code_e) - 1)] != code_k):
        raise GeometryError("boundary edge is not an edge of the triangulation")
    return pos


def deform(mesh: Mesh, v, t: float) -> Mesh:
    """Perturbation of identity ``x -> x + t v(x)`` on the vertex coordinates.

    Raises
    ------
    ElementInversion
        If any triangle's signed area drops below ``1e-14`` times the median
        element area of the input mesh.
    """
    v = np.asarray(v, dtype=np.float64).reshape(mesh.n_vertices, 2)
    moved = mesh.with_vertices(mesh.vertices + t * v)
    threshold = INVERSION_RTOL * float(np.median(mesh.signed_areas))
    area = moved.signed_areas
    bad = np.nonzero(area <= threshold)[0]
    if len(bad):
        worst = int(bad[np.argmin(area[bad])])
        raise ElementInversion(worst, float(area[worst]))
    return moved


@dataclass(frozen=True)
class QualityReport:
    per_element: np.ndarray
    max: float
    median: float


def triangle_quality(p) -> np.ndarray:
    """Circumradius / inradius for triangles given as ``(T, 3, 2)`` corner arrays."""
    p = np.asarray(p, dtype=np.float64)
    la = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    lb = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    lc = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    s = 0.5 * (la + lb + lc)
    # R = abc / 4A, r = A / s
    return la * lb * lc * s / (4.0 * area * area)


def mesh_quality(mesh: Mesh) -> QualityReport:
    area = mesh.signed_areas
    scale = np.max(np.abs(area)) if len(area) else 0.0
    if np.any(np.abs(area) <= 1e-15 * max(scale, np.finfo(float).tiny)):
        raise GeometryError("degenerate (zero-area) triangle in quality evaluation")
    q = triangle_quality(mesh.vertices[mesh.triangles])
    return QualityReport(q, float(q.max()), float(np.median(q)))


def octagon_area(radius: float) -> float:
    """Area of a regular octagon with circumradius ``radius``."""
    return 2.0 * np.sqrt(2.0) * radius * radius


def octagon_perimeter(radius: float) -> float:
    return 8.0 * 2.0 * radius * np.sin(np.pi / 8.0)


def generate_composite_domain(rows: int, cols: int, cell_radius_fraction: float, refinements: int) -> MeshHierarchy:
    """Unit square with ``rows x cols`` regular-octagon inclusions.

    Each lattice cell (width ``1/cols``, height ``1/rows``) carries one
    octagon of circumradius ``cell_radius_fraction * min(1/cols, 1/rows)``,
    fan-triangulated from its center. The surrounding ring is split into
    eight quadrilaterals towards the cell's corners and edge midpoints.
    Cells in row ``k`` (counted from the top, starting at 1) get
    ``subdomain_id = k``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if refinements < 0:
        raise ValueError("refinements must be >= 0")
    if not 0.0 < cell_radius_fraction < 0.5:
        raise GeometryError(
            f"cell_radius_fraction={cell_radius_fraction} must lie in (0, 0.5) "
            "to keep inclusions apart and off the boundary"
        )
    hx, hy = 1.0 / cols, 1.0 / rows
    rho = cell_radius_fraction * min(hx, hy)

    # shared lattice points on a (2*cols+1) x (2*rows+1) half-pitch grid
    nxg, nyg = 2 * cols + 1, 2 * rows + 1
    gi, gj = np.meshgrid(np.arange(nxg), np.arange(nyg), indexing="ij")
    grid = np.column_stack([gi.ravel() * 0.5 * hx, gj.ravel() * 0.5 * hy])

    def gid(i, j):
        return i * nyg + j

    # ring offsets in CCW order, starting at the right edge midpoint
    ring = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
    angles = np.arange(8) * (np.pi / 4.0)
    oct_dir = np.column_stack([np.cos(angles), np.sin(angles)])

    vertices = [grid]
    nv = len(grid)
    triangles, sub = [], []
    for r in range(rows):
        k = r + 1
        jc = 2 * (rows - 1 - r) + 1  # row 1 is the top row
        for c in range(cols):
            ic = 2 * c + 1
            center = grid[gid(ic, jc)]
            octv = center + rho * oct_dir
            o = nv + np.arange(8)
            vertices.append(octv)
            nv += 8
            ctr = gid(ic, jc)
            rv = [gid(ic + di, jc + dj) for di, dj in ring]
            for q in range(8):
                qn = (q + 1) % 8
                triangles.append((ctr, o[q], o[qn]))
                sub.append(k)
                # quad o[q], rv[q], rv[qn], o[qn]; cut along the shorter diagonal
                allv = np.vstack(vertices)
                d1 = np.linalg.norm(allv[o[q]] - allv[rv[qn]])
                d2 = np.linalg.norm(allv[rv[q]] - allv[o[qn]])
                if d1 <= d2:
                    triangles += [(o[q], rv[q], rv[qn]), (o[q], rv[qn], o[qn])]
                else:
                    triangles += [(o[q], rv[q], o[qn]), (rv[q], rv[qn], o[qn])]
                sub += [0, 0]
    # the cell center grid point doubles as the fan center; drop unused grid points
    vertices = np.vstack(vertices)
    triangles = np.array(triangles, dtype=np.int64)
    used = np.zeros(len(vertices), dtype=bool)
    used[triangles.ravel()] = True
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(used.sum())
    vertices = vertices[used]
    triangles = remap[triangles]

    # outer boundary edges along the half-pitch grid
    bedges, btags = [], []
    for i in range(nxg - 1):
        bedges.append((gid(i, 0), gid(i + 1, 0)))
        btags.append(BoundaryTag.BOTTOM)
        bedges.append((gid(i + 1, nyg - 1), gid(i, nyg - 1)))
        btags.append(BoundaryTag.TOP)
    for j in range(nyg - 1):
        bedges.append((gid(nxg - 1, j), gid(nxg - 1, j + 1)))
        btags.append(BoundaryTag.SIDE)
        bedges.append((gid(0, j + 1), gid(0, j)))
        btags.append(BoundaryTag.SIDE)
    bedges = remap[np.array(bedges, dtype=np.int64)]
    coarse = Mesh(vertices, triangles, np.array(sub), bedges, np.array(btags, dtype=np.int64))
    try:
        coarse.validate()
    except GeometryError as exc:
        raise GeometryError(f"generated domain is invalid: {exc}") from exc
    hierarchy = MeshHierarchy.from_coarse(coarse, refinements)
    for level in hierarchy.levels[1:]:
        level.validate()
    return hierarchy
