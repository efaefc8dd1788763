"""Heightfield meshes: grid to quads, triangulation, normals, export.

:class:`MeshBuffers` mirrors the four attributes authored on a renderer mesh:
``points``, ``face_vertex_counts``, ``face_vertex_indices`` and ``st`` (one
texture coordinate per face-vertex, aligned with ``face_vertex_indices``).
Vertex ``(i, j)`` of a grid has index ``j * width + i``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dem import Dem
from .errors import MeshError, UnreadableFileError


@dataclass(frozen=True, eq=False)
class MeshBuffers:
    points: np.ndarray
    face_vertex_counts: np.ndarray
    face_vertex_indices: np.ndarray
    st: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        counts = np.asarray(self.face_vertex_counts, dtype=np.int32).ravel()
        idx = np.asarray(self.face_vertex_indices, dtype=np.int64).ravel()
        st = np.asarray(self.st, dtype=np.float64).reshape(-1, 2)
        if int(counts.sum()) != idx.size:
            raise MeshError(f"sum(face_vertex_counts)={int(counts.sum())} != {idx.size} indices")
        if st.shape[0] != idx.size:
            raise MeshError(f"{st.shape[0]} st entries for {idx.size} face-vertices")
        if idx.size and (idx.min() < 0 or idx.max() >= len(pts)):
            raise MeshError("face vertex index out of range")
        if np.any(counts < 3):
            raise MeshError("faces need at least 3 vertices")
        for name, arr in (("points", pts), ("face_vertex_counts", counts),
                          ("face_vertex_indices", idx), ("st", st)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_faces(self) -> int:
        return self.face_vertex_counts.size

    def uniform_arity(self) -> int | None:
        """Vertices per face when all faces agree, else ``None``."""
        c = self.face_vertex_counts
        if c.size == 0:
            return None
        return int(c[0]) if np.all(c == c[0]) else None

    def faces(self) -> np.ndarray:
        k = self.uniform_arity()
        if k is None:
            raise MeshError("faces() needs faces of equal arity")
        return self.face_vertex_indices.reshape(-1, k)

    def per_vertex_st(self) -> np.ndarray | None:
        """One st per point if every reference to a point carries the same
        st (always true for grid meshes), else ``None``."""
        out = np.full((len(self.points), 2), np.nan)
        out[self.face_vertex_indices] = self.st
        if np.any(np.isnan(out[np.unique(self.face_vertex_indices)])):
            return None
        if not np.array_equal(out[self.face_vertex_indices], self.st):
            return None
        return np.nan_to_num(out)


def _grid_mesh(xs: np.ndarray, ys: np.ndarray, z: np.ndarray, uv_scale: float) -> MeshBuffers:
    w, h = len(xs), len(ys)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel(), np.asarray(z, dtype=np.float64).ravel()])
    j, i = np.mgrid[0:h - 1, 0:w - 1]
    v0 = (j * w + i).ravel()
    # counter-clockwise seen from +z
    quads = np.column_stack([v0, v0 + 1, v0 + w + 1, v0 + w]).ravel()
    st = points[quads, :2] * uv_scale
    counts = np.full((w - 1) * (h - 1), 4, dtype=np.int32)
    return MeshBuffers(points, counts, quads, st)


def dem_to_mesh(dem: Dem, uv_scale: float = 1.0) -> MeshBuffers:
    """One vertex per cell, one quad per 2x2 block of cells.

    Texture coordinates are world x/y times ``uv_scale`` (repeats per meter).
    """
    if dem.has_holes:
        raise MeshError("cannot mesh a grid with holes; fill them first")
    xs = np.arange(dem.width) * dem.resolution
    ys = np.arange(dem.height) * dem.resolution
    return _grid_mesh(xs, ys, dem.elevations, uv_scale)


def triangulate(mesh: MeshBuffers) -> MeshBuffers:
    """Split each quad along its v0-v2 diagonal into (v0,v1,v2), (v0,v2,v3)."""
    if mesh.n_faces == 0:
        return mesh
    if mesh.uniform_arity() != 4:
        raise MeshError("triangulate expects quads only")
    order = [0, 1, 2, 0, 2, 3]
    idx = mesh.face_vertex_indices.reshape(-1, 4)[:, order].ravel()
    st = mesh.st.reshape(-1, 4, 2)[:, order, :].reshape(-1, 2)
    counts = np.full(2 * mesh.n_faces, 3, dtype=np.int32)
    return MeshBuffers(mesh.points, counts, idx, st)


def face_area_vectors(mesh: MeshBuffers) -> np.ndarray:
    """Per-face vector area (Newell's method): direction = normal, length = area."""
    p = mesh.points
    counts = mesh.face_vertex_counts
    out = np.zeros((mesh.n_faces, 3))
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    for k in np.unique(counts):
        sel = np.nonzero(counts == k)[0]
        idx = mesh.face_vertex_indices[offsets[sel][:, None] + np.arange(k)[None, :]]
        v = p[idx]
        nxt = np.roll(v, -1, axis=1)
        out[sel] = 0.5 * np.cross(v, nxt).sum(axis=1)
    return out


def compute_normals(mesh: MeshBuffers) -> np.ndarray:
    """Area-weighted vertex normals; vertices without area get +z."""
    area = face_area_vectors(mesh)
    owner = np.repeat(area, mesh.face_vertex_counts, axis=0)
    n = len(mesh.points)
    acc = np.column_stack([np.bincount(mesh.face_vertex_indices, weights=owner[:, c], minlength=n)
                           for c in range(3)])
    length = np.linalg.norm(acc, axis=1)
    good = length > 0
    normals = np.tile([0.0, 0.0, 1.0], (n, 1))
    normals[good] = acc[good] / length[good, None]
    return normals


def _axis_samples(n: int, factor: int) -> np.ndarray:
    keep = np.arange(0, n, factor)
    if keep[-1] != n - 1:
        keep = np.append(keep, n - 1)
    return keep


def collision_mesh(dem: Dem, factor: int = 1, uv_scale: float = 1.0) -> MeshBuffers:
    """Triangle mesh over every ``factor``-th cell, always keeping the last
    row and column so the footprint is unchanged. Kept heights are exact."""
    if factor < 1:
        raise MeshError("factor must be >= 1")
    if dem.has_holes:
        raise MeshError("cannot mesh a grid with holes; fill them first")
    cols = _axis_samples(dem.width, factor)
    rows = _axis_samples(dem.height, factor)
    if len(cols) < 2 or len(rows) < 2:
        raise MeshError(f"factor {factor} leaves fewer than 2x2 vertices")
    z = dem.elevations[np.ix_(rows, cols)]
    quads = _grid_mesh(cols * dem.resolution, rows * dem.resolution, z, uv_scale)
    return triangulate(quads)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def _write_obj(mesh: MeshBuffers, fh) -> None:
    fh.write(b"# lunarforge heightfield mesh\n")
    np.savetxt(fh, mesh.points, fmt="v %.17g %.17g %.17g")
    vst = mesh.per_vertex_st()
    if vst is not None:
        np.savetxt(fh, vst, fmt="vt %.17g %.17g")
        tex = mesh.face_vertex_indices
    else:
        np.savetxt(fh, mesh.st, fmt="vt %.17g %.17g")
        tex = np.arange(mesh.face_vertex_indices.size)
    v1 = mesh.face_vertex_indices + 1
    t1 = tex + 1
    k = mesh.uniform_arity()
    if k is not None:
        pairs = np.stack([v1.reshape(-1, k), t1.reshape(-1, k)], axis=2).reshape(-1, 2 * k)
        np.savetxt(fh, pairs, fmt="f " + " ".join(["%d/%d"] * k))
        return
    pos = 0
    for c in mesh.face_vertex_counts.tolist():
        corners = " ".join(f"{v}/{t}" for v, t in zip(v1[pos:pos + c].tolist(), t1[pos:pos + c].tolist()))
        fh.write(f"f {corners}\n".encode())
        pos += c


def _write_ply(mesh: MeshBuffers, fh) -> None:
    if mesh.n_faces and mesh.uniform_arity() != 3:
        raise MeshError("ply export expects a triangle mesh; call triangulate first")
    vst = mesh.per_vertex_st()
    if vst is None:
        raise MeshError("st differs between references to one vertex; cannot store it per vertex")
    normals = compute_normals(mesh)
    n = len(mesh.points)
    header = "\n".join([
        "ply",
        "format binary_little_endian 1.0",
        "comment lunarforge heightfield mesh",
        f"element vertex {n}",
        "property double x", "property double y", "property double z",
        "property float nx", "property float ny", "property float nz",
        "property float u", "property float v",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]) + "\n"
    fh.write(header.encode("ascii"))
    vdt = np.dtype([("p", "<f8", 3), ("n", "<f4", 3), ("uv", "<f4", 2)])
    verts = np.empty(n, vdt)
    verts["p"] = mesh.points
    verts["n"] = normals
    verts["uv"] = vst
    fh.write(verts.tobytes())
    fdt = np.dtype([("k", "u1"), ("i", "<i4", 3)])
    faces = np.empty(mesh.n_faces, fdt)
    faces["k"] = 3
    faces["i"] = mesh.face_vertex_indices.reshape(-1, 3)
    fh.write(faces.tobytes())


def export_mesh(mesh: MeshBuffers, path: str | os.PathLike, format: str | None = None) -> None:
    """Write ``mesh`` as Wavefront OBJ (text, 1-based ``v``/``vt``/``f``) or
    binary little-endian PLY (triangles only, per-vertex normal and uv)."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in ("obj", "ply"):
        raise MeshError(f"unknown mesh format {fmt!r}")
    if fmt == "ply" and mesh.n_faces and mesh.uniform_arity() != 3:
        raise MeshError("ply export expects a triangle mesh; call triangulate first")
    try:
        with open(path, "wb") as fh:
            (_write_obj if fmt == "obj" else _write_ply)(mesh, fh)
    except OSError as exc:
        raise UnreadableFileError(f"cannot write {path}: {exc}") from exc


def ply_header_counts(path: str | os.PathLike) -> dict[str, int]:
    """Element counts declared in a PLY header."""
    counts = {}
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.decode("ascii", "replace").strip()
            if line.startswith("element"):
                _, name, count = line.split()
                counts[name] = int(count)
            if line == "end_header":
                break
    return counts

