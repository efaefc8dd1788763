import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lunarforge.dem import Dem
from lunarforge.errors import MeshError, UnreadableFileError
from lunarforge.mesh import (
    MeshBuffers,
    collision_mesh,
    compute_normals,
    dem_to_mesh,
    export_mesh,
    ply_header_counts,
    triangulate,
)


def parse_obj(path):
    """Test-only OBJ reader: v, vt and f (v/vt corners)."""
    v, vt, faces = [], [], []
    for line in open(path):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            v.append([float(p) for p in parts[1:4]])
        elif parts[0] == "vt":
            vt.append([float(p) for p in parts[1:3]])
        elif parts[0] == "f":
            faces.append([tuple(int(k) for k in c.split("/")) for c in parts[1:]])
    return np.array(v), np.array(vt), faces


def parse_ply(path):
    """Test-only binary PLY reader for the layout we write."""
    data = open(path, "rb").read()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode().splitlines()
    assert header[1] == "format binary_little_endian 1.0"
    counts = {ln.split()[1]: int(ln.split()[2]) for ln in header if ln.startswith("element")}
    vdt = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("nx", "<f4"), ("ny", "<f4"),
                    ("nz", "<f4"), ("u", "<f4"), ("v", "<f4")])
    verts = np.frombuffer(data, vdt, counts["vertex"], end)
    fdt = np.dtype([("n", "u1"), ("i", "<i4", 3)])
    faces = np.frombuffer(data, fdt, counts["face"], end + vdt.itemsize * counts["vertex"])
    assert end + vdt.itemsize * counts["vertex"] + fdt.itemsize * counts["face"] == len(data)
    return verts, faces


def signed_areas(mesh: MeshBuffers) -> np.ndarray:
    """Shoelace area of every face projected on the xy plane."""
    out = []
    pos = 0
    for c in mesh.face_vertex_counts:
        p = mesh.points[mesh.face_vertex_indices[pos:pos + c], :2]
        q = np.roll(p, -1, axis=0)
        out.append(0.5 * np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))
        pos += c
    return np.array(out)


def test_smallest_grid():
    m = dem_to_mesh(Dem.flat(2, 2, 1.0))
    assert len(m.points) == 4
    assert m.face_vertex_counts.tolist() == [4]
    assert len(m.face_vertex_indices) == 4 and len(m.st) == 4


def test_three_by_three():
    m = dem_to_mesh(Dem.flat(3, 3, 1.0))
    assert len(m.points) == 9 and m.n_faces == 4 and len(m.face_vertex_indices) == 16


def test_lab_scale_counts():
    m = dem_to_mesh(Dem.flat(650, 1000, 0.01))
    assert len(m.points) == 650_000
    assert m.n_faces == 649 * 999 == 648_351


@given(st.integers(2, 30), st.integers(2, 30), st.floats(0.01, 3.0))
def test_topology_winding_and_heights(w, h, res):
    z = np.random.default_rng(w * 31 + h).normal(size=(h, w))
    dem = Dem(z, res)
    m = dem_to_mesh(dem, uv_scale=0.5)
    assert m.face_vertex_counts.sum() == len(m.face_vertex_indices) == len(m.st)
    assert m.face_vertex_indices.max() < len(m.points)
    assert np.all(signed_areas(m) > 0)
    # vertex (i, j) sits at (i res, j res, z[j, i])
    j, i = 1 % h, (w - 1)
    assert np.array_equal(m.points[j * w + i], [i * res, j * res, z[j, i]])
    assert np.array_equal(m.points[:, 2], z.ravel())
    assert np.array_equal(m.st, m.points[m.face_vertex_indices, :2] * 0.5)
    t = triangulate(m)
    assert t.n_faces == 2 * m.n_faces
    assert np.all(signed_areas(t) > 0)


def test_mesh_rejects_holes():
    with pytest.raises(MeshError):
        dem_to_mesh(Dem(np.zeros((3, 3)), 1.0, np.eye(3, dtype=bool)))


def test_buffer_validation():
    with pytest.raises(MeshError):
        MeshBuffers(np.zeros((3, 3)), [3], [0, 1], np.zeros((2, 2)))
    with pytest.raises(MeshError):
        MeshBuffers(np.zeros((3, 3)), [3], [0, 1, 5], np.zeros((3, 2)))
    with pytest.raises(MeshError):
        MeshBuffers(np.zeros((3, 3)), [3], [0, 1, 2], np.zeros((2, 2)))


def test_triangulate_one_quad():
    m = dem_to_mesh(Dem.flat(2, 2, 1.0))
    t = triangulate(m)
    assert t.face_vertex_counts.tolist() == [3, 3]
    assert t.face_vertex_indices.tolist() == [0, 1, 3, 0, 3, 2]
    assert np.array_equal(t.points, m.points)
    assert np.array_equal(t.st, m.points[t.face_vertex_indices, :2])


def test_triangulated_area_matches_quads(rng):
    m = dem_to_mesh(Dem(rng.normal(size=(6, 9)), 0.3))
    t = triangulate(m)
    assert abs(signed_areas(t).sum() - signed_areas(m).sum()) <= 1e-9
    assert signed_areas(m).sum() == pytest.approx(8 * 0.3 * 5 * 0.3, abs=1e-9)


def test_triangulate_rejects_non_quads():
    t = triangulate(dem_to_mesh(Dem.flat(3, 3, 1.0)))
    with pytest.raises(MeshError):
        triangulate(t)


def test_normals_flat_and_plane():
    assert np.array_equal(compute_normals(dem_to_mesh(Dem.flat(4, 5, 0.2))), np.tile([0, 0, 1.0], (20, 1)))
    x = np.arange(7) * 0.5
    dem = Dem(np.tile(x, (6, 1)), 0.5)  # z = x
    n = compute_normals(dem_to_mesh(dem)).reshape(6, 7, 3)
    assert np.abs(n[1:-1, 1:-1] - np.array([-1, 0, 1]) / math.sqrt(2)).max() <= 1e-6


@given(arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(2, 8)), elements=st.floats(-50, 50)))
def test_normals_unit_length(z):
    n = compute_normals(triangulate(dem_to_mesh(Dem(z, 0.7))))
    assert np.all(np.abs(np.linalg.norm(n, axis=1) - 1) <= 1e-9)


def test_degenerate_vertex_gets_up_normal():
    m = MeshBuffers([[0, 0, 0], [1, 0, 0], [2, 0, 0], [5, 5, 5]], [3], [0, 1, 2], np.zeros((3, 2)))
    assert np.array_equal(compute_normals(m), np.tile([0, 0, 1.0], (4, 1)))


def test_collision_factor_one_is_full_triangulation(rng):
    dem = Dem(rng.normal(size=(5, 7)), 0.1)
    c = collision_mesh(dem, 1)
    t = triangulate(dem_to_mesh(dem))
    assert np.array_equal(c.points, t.points) and np.array_equal(c.face_vertex_indices, t.face_vertex_indices)
    assert c.n_faces == 2 * 4 * 6


def test_collision_factor_two_on_five(rng):
    z = rng.normal(size=(5, 5))
    c = collision_mesh(Dem(z, 1.0), 2)
    assert len(c.points) == 9 and c.n_faces == 8
    assert np.array_equal(c.points[:, 2], z[::2, ::2].ravel())


def test_collision_keeps_last_row_and_column(rng):
    z = rng.normal(size=(8, 11))
    c = collision_mesh(Dem(z, 0.5), 3)
    xs = np.unique(c.points[:, 0])
    assert xs.tolist() == [0.0, 1.5, 3.0, 4.5, 5.0]
    assert np.array_equal(c.points[:, 2], z[np.ix_([0, 3, 6, 7], [0, 3, 6, 9, 10])].ravel())


def test_collision_errors():
    with pytest.raises(MeshError):
        collision_mesh(Dem.flat(3, 3, 1.0), 0)
    # a factor larger than the grid still keeps first and last rows/columns
    assert collision_mesh(Dem.flat(3, 3, 1.0), 10).n_faces == 2


# -- export -------------------------------------------------------------------


def test_obj_smallest(tmp_path):
    path = tmp_path / "q.obj"
    export_mesh(dem_to_mesh(Dem.flat(2, 2, 1.0)), path)
    text = path.read_text().splitlines()
    assert sum(line.startswith("v ") for line in text) == 4
    f = [line for line in text if line.startswith("f ")]
    assert len(f) == 1 and len(f[0].split()) == 5


def test_obj_round_trip(tmp_path, rng):
    m = dem_to_mesh(Dem(rng.normal(size=(4, 6)), 0.37), uv_scale=2.0)
    path = tmp_path / "m.obj"
    export_mesh(m, path)
    v, vt, faces = parse_obj(path)
    assert np.array_equal(v, m.points)
    corners = np.array([c for f in faces for c in f])
    assert np.array_equal(corners[:, 0] - 1, m.face_vertex_indices)
    assert np.array_equal(vt[corners[:, 1] - 1], m.st)


def test_obj_per_corner_st_when_not_collapsible(tmp_path):
    m = MeshBuffers([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], [3, 3], [0, 1, 2, 1, 3, 2],
                    [[0, 0], [1, 0], [0, 1], [9, 9], [1, 1], [0, 1]])
    path = tmp_path / "c.obj"
    export_mesh(m, path)
    _, vt, faces = parse_obj(path)
    corners = np.array([c for f in faces for c in f])
    assert np.array_equal(vt[corners[:, 1] - 1], m.st)


def test_ply_round_trip(tmp_path, rng):
    dem = Dem(rng.normal(size=(5, 4)), 0.25)
    m = triangulate(dem_to_mesh(dem, 1.5))
    path = tmp_path / "m.ply"
    export_mesh(m, path)
    verts, faces = parse_ply(path)
    assert ply_header_counts(path) == {"vertex": len(m.points), "face": m.n_faces}
    assert np.array_equal(np.column_stack([verts["x"], verts["y"], verts["z"]]), m.points)
    assert np.all(faces["n"] == 3)
    assert np.array_equal(faces["i"].ravel(), m.face_vertex_indices)
    n = compute_normals(m).astype(np.float32)
    assert np.array_equal(np.column_stack([verts["nx"], verts["ny"], verts["nz"]]), n)
    assert np.array_equal(np.column_stack([verts["u"], verts["v"]]), (m.points[:, :2] * 1.5).astype(np.float32))


def test_ply_requires_triangles(tmp_path):
    with pytest.raises(MeshError):
        export_mesh(dem_to_mesh(Dem.flat(2, 2, 1.0)), tmp_path / "q.ply")


def test_export_errors(tmp_path):
    m = dem_to_mesh(Dem.flat(2, 2, 1.0))
    with pytest.raises(MeshError):
        export_mesh(m, tmp_path / "q.stl")
    with pytest.raises(UnreadableFileError):
        export_mesh(m, tmp_path / "missing" / "q.obj")
