import numpy as np
import pytest

from cellshape.io import read_mesh, read_vtk_points, write_mesh, write_vtk


def test_mesh_round_trip_exact(tmp_path, small_mesh, rng):
    m = small_mesh.with_vertices(small_mesh.vertices + 1e-3 * rng.standard_normal(small_mesh.vertices.shape))
    path = tmp_path / "m.txt"
    write_mesh(path, m)
    back = read_mesh(path)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.subdomain_id, m.subdomain_id)
    np.testing.assert_array_equal(back.boundary_edges, m.boundary_edges)
    np.testing.assert_array_equal(back.boundary_tags, m.boundary_tags)
    back.validate()


def test_mesh_format_header_and_records(tmp_path, small_mesh):
    path = tmp_path / "m.txt"
    write_mesh(path, small_mesh)
    lines = path.read_text().splitlines()
    assert lines[0] == "cellmesh 1"
    kinds = [ln.split()[0] for ln in lines[1:] if not ln.startswith("#")]
    assert kinds.count("vertex") == small_mesh.n_vertices
    assert kinds.count("triangle") == small_mesh.n_triangles
    assert kinds.count("bedge") == len(small_mesh.boundary_edges)
    assert {ln.split()[-1] for ln in lines if ln.startswith("bedge")} == {"TOP", "BOTTOM", "SIDE"}


@pytest.mark.parametrize(
    "text",
    ["", "cellmesh 2\n", "cellmesh 1\nvertex 0 0 0\n", "cellmesh 1\nbedge 0 1 LEFT\n", "cellmesh 1\nquad 0 1 2 3\n"],
)
def test_read_mesh_rejects_malformed(tmp_path, text):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ValueError):
        read_mesh(path)


def test_vtk_layout_and_points(tmp_path, small_mesh, rng):
    u = rng.standard_normal((small_mesh.n_vertices, 2))
    path = tmp_path / "s.vtk"
    write_vtk(path, small_mesh, {"u": u, "v": u.ravel()}, {"quality": np.ones(small_mesh.n_triangles)})
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"CELLS {small_mesh.n_triangles} {4 * small_mesh.n_triangles}" in text
    assert f"CELL_TYPES {small_mesh.n_triangles}" in text
    assert "SCALARS subdomain_id int 1" in text
    assert "VECTORS u double" in text and "VECTORS v double" in text
    np.testing.assert_array_equal(read_vtk_points(path), small_mesh.vertices)
