"""Mesh text format and VTK legacy ASCII export.

Mesh text format::

    cellmesh 1
    # comment
    vertex <x> <y>
    triangle <i> <j> <k> <subdomain>
    bedge <i> <j> <TOP|BOTTOM|SIDE>
"""
from __future__ import annotations

import os

import numpy as np

from .mesh import BoundaryTag, Mesh

HEADER = "cellmesh 1"


def write_mesh(path, mesh: Mesh) -> None:
    with open(path, "w") as fh:
        fh.write(HEADER + "\n")
        fh.write(f"# {mesh.n_vertices} vertices, {mesh.n_triangles} triangles\n")
        for x, y in mesh.vertices.tolist():
            fh.write(f"vertex {x!r} {y!r}\n")
        for (i, j, k), s in zip(mesh.triangles.tolist(), mesh.subdomain_id.tolist()):
            fh.write(f"triangle {i} {j} {k} {s}\n")
        for (i, j), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist()):
            fh.write(f"bedge {i} {j} {BoundaryTag(tag).name}\n")


def read_mesh(path) -> Mesh:
    vertices, triangles, sub, bedges, btags = [], [], [], [], []
    seen_header = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if not seen_header:
                if parts != HEADER.split():
                    raise ValueError(f"{path}:{lineno}: expected header {HEADER!r}")
                seen_header = True
                continue
            kind = parts[0]
            try:
                if kind == "vertex" and len(parts) == 3:
                    vertices.append((float(parts[1]), float(parts[2])))
                elif kind == "triangle" and len(parts) == 5:
                    triangles.append(tuple(int(p) for p in parts[1:4]))
                    sub.append(int(parts[4]))
                elif kind == "bedge" and len(parts) == 4:
                    bedges.append((int(parts[1]), int(parts[2])))
                    btags.append(int(BoundaryTag[parts[3]]))
                else:
                    raise ValueError(f"unrecognized record {line!r}")
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not seen_header:
        raise ValueError(f"{path}: empty mesh file")
    return Mesh(
        np.array(vertices).reshape(-1, 2),
        np.array(triangles, dtype=np.int64).reshape(-1, 3),
        np.array(sub, dtype=np.int64),
        np.array(bedges, dtype=np.int64).reshape(-1, 2),
        np.array(btags, dtype=np.int64),
    )


def write_vtk(path, mesh: Mesh, point_data=None, cell_data=None, title="cellshape") -> None:
    """VTK legacy unstructured grid (triangles, cell type 5).

    ``point_data`` maps names to ``(V, 2)`` vector fields (written as 3D
    vectors) or ``(V,)`` scalars; ``subdomain_id`` is always written as cell
    data.
    """
    point_data = point_data or {}
    cell_data = dict(cell_data or {})
    nv, nt = mesh.n_vertices, mesh.n_triangles
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        for x, y in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} 0.0\n")
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for i, j, k in mesh.triangles.tolist():
            fh.write(f"3 {i} {j} {k}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write("5\n" * nt)
        fh.write(f"CELL_DATA {nt}\n")
        fh.write("SCALARS subdomain_id int 1\nLOOKUP_TABLE default\n")
        fh.write("\n".join(str(s) for s in mesh.subdomain_id.tolist()) + "\n")
        for name, values in cell_data.items():
            values = np.asarray(values, dtype=np.float64).ravel()
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(repr(x) for x in values.tolist()) + "\n")
        if point_data:
            fh.write(f"POINT_DATA {nv}\n")
            for name, values in point_data.items():
                values = np.asarray(values, dtype=np.float64)
                if values.size == 2 * nv:
                    values = values.reshape(nv, 2)
                    fh.write(f"VECTORS {name} double\n")
                    for a, b in values.tolist():
                        fh.write(f"{a!r} {b!r} 0.0\n")
                else:
                    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    fh.write("\n".join(repr(x) for x in values.ravel().tolist()) + "\n")


def read_vtk_points(path) -> np.ndarray:
    """Parse back the POINTS block of a file written by :func:`write_vtk`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    for idx, line in enumerate(lines):
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            pts = np.array([[float(t) for t in lines[idx + 1 + k].split()] for k in range(n)])
            return pts[:, :2]
    raise ValueError(f"{path}: no POINTS section")
