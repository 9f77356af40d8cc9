"""Triangle mesh model, ASCII OFF I/O, adjacency and per-vertex differential geometry."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse


class OffParseError(ValueError):
    """Raised for malformed OFF input; ``line`` is 1-based (0 when unknown)."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    min: np.ndarray
    max: np.ndarray

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle surface.

    Arrays are copied and made read-only on construction, so instances can be
    shared freely between threads. Derived structures (adjacency, normals) are
    computed lazily and cached.
    """

    vertices: np.ndarray
    faces: np.ndarray
    id: str = ""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise MeshError("vertex positions must be finite")
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise MeshError("face index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise MeshError("degenerate face (repeated vertex index)")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Binary symmetric vertex adjacency (edge graph)."""
        f = self.faces
        i = np.concatenate([f[:, 0], f[:, 1], f[:, 2], f[:, 1], f[:, 2], f[:, 0]])
        j = np.concatenate([f[:, 1], f[:, 2], f[:, 0], f[:, 0], f[:, 1], f[:, 2]])
        n = self.n_vertices
        a = sparse.csr_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
        a.data[:] = 1.0
        a.sort_indices()
        return a

    @cached_property
    def edge_face_counts(self) -> dict[tuple[int, int], int]:
        counts: dict[tuple[int, int], int] = {}
        for a, b, c in self.faces.tolist():
            for e in ((a, b), (b, c), (c, a)):
                key = (e[0], e[1]) if e[0] < e[1] else (e[1], e[0])
                counts[key] = counts.get(key, 0) + 1
        return counts

    @cached_property
    def vertex_faces(self) -> sparse.csr_matrix:
        """V x F incidence; row v lists the faces touching vertex v."""
        f = self.faces
        rows = f.reshape(-1)
        cols = np.repeat(np.arange(len(f)), 3)
        m = sparse.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.n_vertices, len(f))
        )
        m.sort_indices()
        return m

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def incident_faces(self, v: int) -> np.ndarray:
        m = self.vertex_faces
        return m.indices[m.indptr[v]:m.indptr[v + 1]]

    @cached_property
    def face_normals_raw(self) -> np.ndarray:
        """Unnormalized face normals; length equals twice the face area."""
        v, f = self.vertices, self.faces
        return np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals_raw, axis=1)

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals following the face winding."""
        acc = np.zeros((self.n_vertices, 3))
        fn = self.face_normals_raw
        for k in range(3):
            np.add.at(acc, self.faces[:, k], fn)
        norm = np.linalg.norm(acc, axis=1)
        ok = norm > 0
        acc[ok] /= norm[ok, None]
        acc[~ok] = (0.0, 0.0, 1.0)
        acc.setflags(write=False)
        return acc

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        keys = np.array(list(self.edge_face_counts.keys()), dtype=np.int64).reshape(-1, 2)
        return np.linalg.norm(self.vertices[keys[:, 0]] - self.vertices[keys[:, 1]], axis=1)

    def translated(self, offset) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(offset, float), self.faces, self.id)

    def transformed(self, rotation, offset=(0.0, 0.0, 0.0), scale: float = 1.0) -> "TriMesh":
        rot = np.asarray(rotation, float)
        return TriMesh(scale * self.vertices @ rot.T + np.asarray(offset, float), self.faces, self.id)


@dataclass(frozen=True, eq=False)
class VertexGeometry:
    normals: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray
    quality: np.ndarray = field(default=None)

    @property
    def mean_curvature(self) -> np.ndarray:
        return 0.5 * (self.kappa1 + self.kappa2)

    @property
    def gaussian_curvature(self) -> np.ndarray:
        return self.kappa1 * self.kappa2


# ---------------------------------------------------------------------------
# OFF format


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def parse_off(data: bytes | str, mesh_id: str = "") -> TriMesh:
    """Parse an ASCII OFF file into a :class:`TriMesh`.

    The header may stand alone (``OFF``) or carry the counts on the same line
    (``OFF 8 12 0``). Only triangular faces are accepted; trailing tokens on a
    face line (colors) are ignored.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise OffParseError("not an ASCII OFF file") from exc
    else:
        text = data

    lines = [
        (no, toks)
        for no, raw in enumerate(text.splitlines(), start=1)
        if (toks := _strip_comment(raw).split())
    ]
    if not lines:
        raise OffParseError("empty input: missing OFF header")

    pos = 0
    no, toks = lines[pos]
    if toks[0] != "OFF":
        raise OffParseError(f"missing OFF header (got {toks[0]!r})", no)
    counts = toks[1:]
    if not counts:
        pos += 1
        if pos >= len(lines):
            raise OffParseError("missing counts line", no)
        no, counts = lines[pos]
    if len(counts) < 2:
        raise OffParseError("counts line needs vertex and face counts", no)
    try:
        n_v, n_f = int(counts[0]), int(counts[1])
    except ValueError as exc:
        raise OffParseError("non-integer counts", no) from exc
    if n_v < 0 or n_f < 0:
        raise OffParseError("negative counts", no)
    pos += 1

    body = lines[pos:]
    if len(body) < n_v + n_f:
        last = body[-1][0] if body else no
        raise OffParseError(
            f"count mismatch: header declares {n_v} vertices and {n_f} faces, "
            f"found {len(body)} data lines",
            last,
        )
    if len(body) > n_v + n_f:
        raise OffParseError("count mismatch: unexpected data after last face", body[n_v + n_f][0])

    verts = np.empty((n_v, 3))
    for k in range(n_v):
        no, toks = body[k]
        if len(toks) < 3:
            raise OffParseError("vertex line needs 3 coordinates", no)
        try:
            verts[k] = [float(t) for t in toks[:3]]
        except ValueError as exc:
            raise OffParseError("bad vertex coordinate", no) from exc
        if not np.all(np.isfinite(verts[k])):
            raise OffParseError("non-finite vertex coordinate", no)

    faces = np.empty((n_f, 3), dtype=np.int64)
    for k in range(n_f):
        no, toks = body[n_v + k]
        try:
            ints = [int(t) for t in toks[:4]]
        except ValueError as exc:
            raise OffParseError("bad face line", no) from exc
        if ints[0] != 3:
            raise OffParseError(f"non-triangular face ({ints[0]} vertices)", no)
        if len(ints) < 4:
            raise OffParseError("face line shorter than its vertex count", no)
        tri = ints[1:4]
        if min(tri) < 0 or max(tri) >= n_v:
            raise OffParseError(f"face index out of range (vertex count {n_v})", no)
        if len(set(tri)) != 3:
            raise OffParseError("degenerate face (repeated vertex index)", no)
        faces[k] = tri

    return TriMesh(verts, faces, mesh_id)


def write_off(mesh: TriMesh) -> str:
    """Serialize with round-trip float precision."""
    out = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    out.extend(" ".join(repr(float(c)) for c in p) for p in mesh.vertices)
    out.extend(f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist())
    return "\n".join(out) + "\n"


def load_off(path: str | Path) -> TriMesh:
    path = Path(path)
    return parse_off(path.read_bytes(), path.stem)


def save_off(mesh: TriMesh, path: str | Path) -> None:
    Path(path).write_text(write_off(mesh))


# ---------------------------------------------------------------------------
# queries


def bbox(mesh: TriMesh) -> BBox:
    if mesh.n_vertices == 0:
        raise MeshError("bounding box of an empty mesh")
    return BBox(mesh.vertices.min(axis=0), mesh.vertices.max(axis=0))


def vertex_rings(mesh: TriMesh, v: int, k: int) -> set[int]:
    """Vertices within ``k`` edge hops of ``v``, excluding ``v``."""
    if not 0 <= v < mesh.n_vertices:
        raise MeshError(f"invalid vertex {v}")
    if k < 0:
        raise MeshError("ring count must be >= 0")
    seen = {v}
    frontier = [v]
    for _ in range(k):
        nxt = []
        for u in frontier:
            for w in mesh.neighbors(u).tolist():
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        if not nxt:
            break
        frontier = nxt
    seen.discard(v)
    return seen


def ring_neighborhoods(mesh: TriMesh, k: int) -> sparse.csr_matrix:
    """Sparse V x V pattern of k-ring neighborhoods (diagonal included)."""
    a = mesh.adjacency
    eye = sparse.identity(mesh.n_vertices, format="csr")
    reach = eye.copy()
    for _ in range(k):
        reach = reach + reach @ a
        reach.data[:] = 1.0
    reach = reach.tocsr()
    reach.sort_indices()
    return reach


def tangent_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``n`` to a right-handed orthonormal frame."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def estimate_geometry(mesh: TriMesh) -> VertexGeometry:
    """Area-weighted normals and principal curvatures.

    Curvatures come from a least-squares quadratic patch over the 2-ring
    neighbors in a tangent frame. A first fit ``h = a u^2 + b uw + c w^2 +
    d u + e w`` tilts the frame normal by the fitted gradient; in that frame
    each neighbor gives a normal curvature ``-2h / (u^2 + w^2 + h^2)`` (the
    circle through the vertex and the neighbor), and an Euler-form fit of
    those values yields the shape operator. Curvature is positive where the
    surface bends away from the normal (convex side of an outward oriented
    closed surface). The returned normals stay the area-weighted ones.
    """
    normals = mesh.vertex_normals
    n_v = mesh.n_vertices
    k1 = np.zeros(n_v)
    k2 = np.zeros(n_v)
    quality = np.ones(n_v)
    reach = ring_neighborhoods(mesh, 2)
    verts = mesh.vertices
    has_face = np.diff(mesh.vertex_faces.indptr) > 0

    for v in range(n_v):
        nb = reach.indices[reach.indptr[v]:reach.indptr[v + 1]]
        nb = nb[nb != v]
        if not has_face[v] or len(nb) < 3:
            quality[v] = 0.0
            continue
        n = normals[v]
        e1, e2 = tangent_frame(n)
        q = verts[nb] - verts[v]
        if len(nb) >= 5:
            u, w, h = q @ e1, q @ e2, q @ n
            coef, _, rank, _ = np.linalg.lstsq(np.column_stack([u * u, u * w, w * w, u, w]), h, rcond=None)
            if rank == 5:
                tilted = n - coef[3] * e1 - coef[4] * e2
                n = tilted / np.sqrt(tilted @ tilted)
                e1, e2 = tangent_frame(n)
        u, w, h = q @ e1, q @ e2, q @ n
        rho2 = u * u + w * w
        if np.any(rho2 <= 0.0):
            quality[v] = 0.0
            continue
        kn = -2.0 * h / (rho2 + h * h)
        a_mat = np.column_stack([u * u, u * w, w * w]) / rho2[:, None]
        coef, _, rank, _ = np.linalg.lstsq(a_mat, kn, rcond=None)
        if rank < 3:
            quality[v] = 0.0
            continue
        a, b, c = coef
        ev = np.linalg.eigvalsh(np.array([[a, 0.5 * b], [0.5 * b, c]]))
        k1[v], k2[v] = ev[1], ev[0]

    return VertexGeometry(normals, k1, k2, quality)
