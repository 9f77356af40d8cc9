"""Shortest-edge-collapse decimation with vertex correspondence."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, TriMesh


@dataclass(frozen=True, eq=False)
class Decimation:
    mesh: TriMesh
    # decimated vertex index -> original vertex index
    correspondence: np.ndarray
    exhausted: bool = False


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def decimate(mesh: TriMesh, fraction_removed: float) -> Decimation:
    """Remove roughly ``fraction_removed`` of the vertices.

    Each step collapses the currently shortest admissible edge onto its
    lower-indexed endpoint, so every surviving vertex keeps its original
    position and the correspondence map is exact. A collapse is admissible
    when it passes the link condition, does not pinch the boundary and does
    not flip any surviving face. If no admissible edge remains before the
    target, the best-effort mesh is returned with ``exhausted=True``.
    """
    if not 0.0 <= fraction_removed < 1.0:
        raise MeshError("fraction_removed must lie in [0, 1)")
    n_v = mesh.n_vertices
    if fraction_removed == 0.0:
        return Decimation(mesh, np.arange(n_v), False)

    target = int(round((1.0 - fraction_removed) * n_v))
    pos = mesh.vertices
    faces: dict[int, list[int]] = {i: list(f) for i, f in enumerate(mesh.faces.tolist())}
    vfaces: list[set[int]] = [set() for _ in range(n_v)]
    for fi, f in faces.items():
        for v in f:
            vfaces[v].add(fi)
    alive = np.diff(mesh.vertex_faces.indptr) > 0
    n_alive = int(np.count_nonzero(alive))

    def neighbors(v: int) -> set[int]:
        out: set[int] = set()
        for fi in vfaces[v]:
            out.update(faces[fi])
        out.discard(v)
        return out

    def edge_faces(a: int, b: int) -> list[int]:
        return [fi for fi in vfaces[a] if b in faces[fi]]

    def is_boundary_vertex(v: int) -> bool:
        return any(len(edge_faces(v, w)) == 1 for w in neighbors(v))

    def normal(tri) -> np.ndarray:
        p = pos[tri]
        return np.cross(p[1] - p[0], p[2] - p[0])

    def admissible(keep: int, drop: int) -> bool:
        shared = edge_faces(keep, drop)
        if len(shared) not in (1, 2):
            return False
        opposite = {w for fi in shared for w in faces[fi] if w not in (keep, drop)}
        common = neighbors(keep) & neighbors(drop)
        if common != opposite:
            return False
        # collapsing would glue two faces onto each other (tetrahedron-like)
        if len(opposite) == 2:
            w, x = opposite
            for fi in vfaces[w] & vfaces[x]:
                if keep in faces[fi] or drop in faces[fi]:
                    return False
        if len(shared) == 2 and is_boundary_vertex(keep) and is_boundary_vertex(drop):
            return False
        for fi in vfaces[drop]:
            if fi in shared:
                continue
            tri = faces[fi]
            moved = [keep if v == drop else v for v in tri]
            n_old, n_new = normal(tri), normal(moved)
            if np.dot(n_old, n_new) <= 0.0 or np.linalg.norm(n_new) <= 1e-300:
                return False
        return True

    heap: list[tuple[float, int, int]] = []
    for a, b in mesh.edge_face_counts:
        heapq.heappush(heap, (float(np.linalg.norm(pos[a] - pos[b])), a, b))

    exhausted = False
    while n_alive > target:
        if not heap:
            exhausted = True
            break
        _, a, b = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or b not in neighbors(a):
            continue
        keep, drop = a, b  # a < b by construction
        if not admissible(keep, drop):
            continue
        for fi in edge_faces(keep, drop):
            for v in faces[fi]:
                vfaces[v].discard(fi)
            del faces[fi]
        for fi in list(vfaces[drop]):
            faces[fi] = [keep if v == drop else v for v in faces[fi]]
            vfaces[keep].add(fi)
        vfaces[drop].clear()
        alive[drop] = False
        n_alive -= 1
        for w in neighbors(keep):
            lo, hi = _edge(keep, w)
            heapq.heappush(heap, (float(np.linalg.norm(pos[lo] - pos[hi])), lo, hi))

    used = np.flatnonzero(alive)
    remap = -np.ones(n_v, dtype=np.int64)
    remap[used] = np.arange(len(used))
    new_faces = np.array([faces[fi] for fi in sorted(faces)], dtype=np.int64).reshape(-1, 3)
    out = TriMesh(pos[used], remap[new_faces], mesh.id)
    return Decimation(out, used, exhausted)
