"""Sphere/surface intersection rings, arc-length resampling and histogram sampling.

A ring is the intersection curve of a sphere centred at a vertex with the
mesh. Within each triangle the curve is approximated by the chord joining
its two crossings with the triangle's edges; crossings themselves lie
exactly on the sphere. Every polyline point carries a face index and
barycentric coordinates so vertex attributes can be interpolated along it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import TriMesh

RING_SCALE = 0.0375
SAMPLES_PER_RING = 20
HISTOGRAM_PERCENTS = (0, 10, 30, 50, 70, 90, 100)
# slack on floor(L / s) so an ideal circle keeps all 20 samples
COUNT_TOL = 1e-3


class RingError(ValueError):
    pass


class EmptyRingError(RingError):
    """The sphere does not cut the surface around the centre vertex."""


class DegenerateRingError(RingError):
    """The ring is too short to hold three samples."""


@dataclass(frozen=True, eq=False)
class Polyline:
    """Piecewise-linear curve on a mesh.

    Segment ``i`` runs from ``points[i]`` to ``points[i + 1]`` (wrapping when
    ``closed``) inside face ``faces[i]``; ``bary0[i]`` and ``bary1[i]`` are
    the barycentric coordinates of its end points in that face.
    ``center``/``axis`` are the sphere centre and the centre's normal, when
    known.
    """

    points: np.ndarray
    faces: np.ndarray | None = None
    bary0: np.ndarray | None = None
    bary1: np.ndarray | None = None
    closed: bool = True
    center: np.ndarray | None = None
    axis: np.ndarray | None = None

    @property
    def n_segments(self) -> int:
        n = len(self.points)
        return n if self.closed else n - 1

    def segment_vectors(self) -> np.ndarray:
        p = self.points
        if self.closed:
            return np.concatenate([p[1:], p[:1]]) - p
        return p[1:] - p[:-1]

    @property
    def length(self) -> float:
        seg = self.segment_vectors()
        return float(np.sqrt(np.einsum("ij,ij->i", seg, seg)).sum())


@dataclass(frozen=True, eq=False)
class SampledRing:
    """Equally spaced points along a ring with their surface locations."""

    points: np.ndarray
    faces: np.ndarray | None
    bary: np.ndarray | None
    spacing: float

    def interpolate(self, mesh: TriMesh, values: np.ndarray) -> np.ndarray:
        """Barycentric interpolation of per-vertex ``values`` at the samples."""
        corner = values[mesh.faces[self.faces]]  # (n, 3, ...)
        return np.einsum("nk,nk...->n...", self.bary, corner)


@dataclass(frozen=True, eq=False)
class RingSet:
    center: int
    radii: np.ndarray
    rings: list  # SampledRing, or None for an empty/degenerate ring


def ring_radii(diagonal: float, n_rings: int = 5) -> np.ndarray:
    """Radii ``j * B * 0.0375 / R`` for ``j = 1..R``."""
    if not diagonal > 0:
        raise ValueError("bounding box diagonal must be positive")
    if n_rings < 1:
        raise ValueError("need at least one ring")
    step = diagonal * RING_SCALE / n_rings
    return step * np.arange(1, n_rings + 1)


def histogram_sample(values) -> np.ndarray:
    """Sorted values at the 0/10/30/50/70/90/100 % positions.

    Index for percentage ``p`` is ``round(p/100 * (n-1))`` with halves rounded
    away from zero, computed in integer arithmetic.
    """
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = len(v)
    if n == 0:
        raise ValueError("histogram sampling of an empty sequence")
    idx = [(p * (n - 1) + 50) // 100 for p in HISTOGRAM_PERCENTS]
    return v[idx]


# ---------------------------------------------------------------------------
# extraction


class RingExtractor:
    """Extracts sphere rings around vertices of one mesh.

    Holds the spatial index and edge tables so repeated queries on the same
    mesh are cheap.
    """

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.tree = cKDTree(mesh.vertices)
        f = mesh.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        self.edges, inv = np.unique(e, axis=0, return_inverse=True)
        # face_edges[f, k] is the edge from corner k to corner k+1
        self.face_edges = inv.reshape(3, -1).T
        lengths = np.linalg.norm(mesh.vertices[self.edges[:, 0]] - mesh.vertices[self.edges[:, 1]], axis=1)
        self.max_edge = float(lengths.max()) if len(lengths) else 0.0

    def candidate_faces(self, center: np.ndarray, radius: float) -> np.ndarray:
        near = self.tree.query_ball_point(center, radius + self.max_edge)
        if not near:
            return np.empty(0, dtype=np.int64)
        vf = self.mesh.vertex_faces[np.asarray(near)]
        return np.unique(vf.indices)

    def components(self, vertex: int, radius: float, faces: np.ndarray | None = None) -> list[Polyline]:
        mesh = self.mesh
        center = mesh.vertices[vertex]
        if faces is None:
            faces = self.candidate_faces(center, radius)
        return _intersection_curves(self, faces, center, radius, mesh.vertex_normals[vertex])

    def extract(self, vertex: int, radius: float, faces: np.ndarray | None = None) -> Polyline:
        comps = self.components(vertex, radius, faces)
        if not comps:
            raise EmptyRingError(f"no intersection at radius {radius:g} around vertex {vertex}")
        if len(comps) == 1:
            return comps[0]
        center = self.mesh.vertices[vertex]
        dist = [np.linalg.norm(c.points.mean(axis=0) - center) for c in comps]
        return comps[int(np.argmin(dist))]


def extract_ring(mesh: TriMesh, vertex: int, radius: float) -> Polyline:
    """Ring of the sphere ``(P, radius)`` around vertex ``P``.

    Among several intersection components the one whose centroid is nearest
    ``P`` is returned. The polyline is oriented counterclockwise about the
    normal at ``P``. Raises :class:`EmptyRingError` when nothing intersects.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    return RingExtractor(mesh).extract(vertex, radius)


def _edge_roots(x: np.ndarray, y: np.ndarray, center: np.ndarray, r2: float):
    """Crossing parameters of segments x->y with the sphere.

    Returns (t0, t1, count) where count is 0, 1 or 2, ``t0 <= t1`` and unused
    slots are NaN. Inside means strictly closer than the radius.
    """
    d = y - x
    rel = x - center
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * np.einsum("ij,ij->i", rel, d)
    c = np.einsum("ij,ij->i", rel, rel) - r2
    f1 = a + b + c
    in0, in1 = c < 0, f1 < 0
    disc = b * b - 4 * a * c
    sq = np.sqrt(np.maximum(disc, 0.0))
    q = -0.5 * (b + np.where(b >= 0, sq, -sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        r_a = q / a
        r_b = np.where(q != 0, c / q, np.nan)
    lo = np.fmin(r_a, r_b)
    hi = np.fmax(r_a, r_b)

    count = np.zeros(len(a), dtype=np.int8)
    t0 = np.full(len(a), np.nan)
    t1 = np.full(len(a), np.nan)
    one = in0 != in1
    # exactly one root in [0, 1]: the larger one when starting inside
    t0[one] = np.clip(np.where(in0[one], hi[one], lo[one]), 0.0, 1.0)
    count[one] = 1
    two = (~in0) & (~in1) & (disc > 0) & (lo > 0) & (hi < 1)
    t0[two], t1[two] = lo[two], hi[two]
    count[two] = 2
    return t0, t1, count


def _intersection_curves(ex: RingExtractor, faces: np.ndarray, center: np.ndarray, radius: float,
                         axis: np.ndarray) -> list[Polyline]:
    if len(faces) == 0:
        return []
    verts = ex.mesh.vertices
    tri = ex.mesh.faces[faces]
    fe = ex.face_edges[faces]
    eids = np.unique(fe)
    edges = ex.edges[eids]
    t0s, t1s, cnts = _edge_roots(verts[edges[:, 0]], verts[edges[:, 1]], center, radius * radius)
    if not cnts.any():
        return []
    # local edge index of each face edge
    fe_local = np.searchsorted(eids, fe)
    fcnt = cnts[fe_local]  # (F, 3)
    hit = fcnt.sum(axis=1) > 0
    if not hit.any():
        return []
    rel = verts - center
    # node key of a crossing: 2 * local edge id + root slot
    xpts = {}
    for slot, ts in ((0, t0s), (1, t1s)):
        ok = cnts > slot
        p, q = verts[edges[ok, 0]], verts[edges[ok, 1]]
        pts = p + ts[ok, None] * (q - p)
        for le, pt in zip(np.flatnonzero(ok).tolist(), pts):
            xpts[2 * le + slot] = pt

    # (face, key_from, key_to, bary_from, bary_to)
    segs: list[tuple] = []

    simple = hit & (fcnt.max(axis=1) == 1) & (fcnt.sum(axis=1) == 2)
    if simple.any():
        st = tri[simple]
        inside = np.einsum("fkj,fkj->fk", rel[st], rel[st]) < radius * radius
        nxt_inside = np.roll(inside, -1, axis=1)
        exit_k = np.argmax(inside & ~nxt_inside, axis=1)
        entry_k = np.argmax(~inside & nxt_inside, axis=1)
        rows = np.arange(len(st))
        fl = fe_local[simple]
        fids = faces[simple]

        def crossing(k):
            le = fl[rows, k]
            t = t0s[le]
            a, b = st[rows, k], st[rows, (k + 1) % 3]
            s = np.where(a < b, t, 1.0 - t)
            bary = np.zeros((len(st), 3))
            bary[rows, k] = 1.0 - s
            bary[rows, (k + 1) % 3] = s
            return 2 * le, bary

        kx, bx = crossing(exit_k)
        kn, bn = crossing(entry_k)
        for i in range(len(st)):
            segs.append((int(fids[i]), int(kx[i]), int(kn[i]), bx[i], bn[i]))

    for fl_i in np.flatnonzero(hit & ~simple).tolist():
        fverts = tri[fl_i]
        crossings = []  # (node key, bary in face, is_exit)
        for k in range(3):
            a, b = int(fverts[k]), int(fverts[(k + 1) % 3])
            le = int(fe_local[fl_i, k])
            n = int(cnts[le])
            if n == 0:
                continue
            forward = a < b
            local = []
            for slot, t in enumerate((t0s[le], t1s[le])[:n]):
                s = t if forward else 1.0 - t
                bary = np.zeros(3)
                bary[k] = 1.0 - s
                bary[(k + 1) % 3] = s
                local.append((s, 2 * le + slot, bary))
            local.sort(key=lambda item: item[0])
            if n == 1:
                crossings.append((local[0][1], local[0][2], bool(rel[a] @ rel[a] < radius * radius)))
            else:
                crossings.append((local[0][1], local[0][2], False))
                crossings.append((local[1][1], local[1][2], True))
        m = len(crossings)
        for i in range(m):
            key, bary, is_exit = crossings[i]
            if not is_exit:
                continue
            nkey, nbary, nexit = crossings[(i + 1) % m]
            if nexit or nkey == key:
                continue
            segs.append((int(faces[fl_i]), key, nkey, bary, nbary))

    if not segs:
        return []
    adj: dict[int, list[int]] = {}
    for sid, (_, ka, kb, _, _) in enumerate(segs):
        adj.setdefault(ka, []).append(sid)
        adj.setdefault(kb, []).append(sid)

    used = [False] * len(segs)
    curves = []
    # open chains first (start at degree-1 nodes), then closed loops
    starts = [k for k, s in adj.items() if len(s) == 1] + list(adj.keys())
    for start in starts:
        keys, fids_, b0, b1 = [start], [], [], []
        node = start
        closed = False
        while True:
            sid = next((s for s in adj[node] if not used[s]), None)
            if sid is None:
                break
            used[sid] = True
            face, ka, kb, ba, bb = segs[sid]
            if ka == node:
                other, bs, be = kb, ba, bb
            else:
                other, bs, be = ka, bb, ba
            fids_.append(face)
            b0.append(bs)
            b1.append(be)
            if other == start:
                closed = True
                break
            keys.append(other)
            node = other
        if not fids_:
            continue
        pts = np.array([xpts[k] for k in keys])
        poly = Polyline(pts, np.array(fids_), np.array(b0), np.array(b1), closed, center, axis)
        curves.append(_orient(poly, center, axis))
    return curves


def _orient(poly: Polyline, center: np.ndarray, axis: np.ndarray) -> Polyline:
    """Make the polyline run counterclockwise about ``axis``."""
    p = poly.points - center
    q = np.concatenate([p[1:], p[:1]]) if poly.closed else p[1:]
    p = p[: len(q)]
    area = (axis[0] * (p[:, 1] @ q[:, 2] - p[:, 2] @ q[:, 1])
            + axis[1] * (p[:, 2] @ q[:, 0] - p[:, 0] @ q[:, 2])
            + axis[2] * (p[:, 0] @ q[:, 1] - p[:, 1] @ q[:, 0]))
    if area >= 0:
        return poly
    if poly.closed:
        # reversing a cycle: point i-th of the reversed list is old point -i
        order = np.r_[0, np.arange(len(p) - 1, 0, -1)]
        seg = np.r_[np.arange(len(p) - 1, -1, -1)]
        return Polyline(poly.points[order], poly.faces[seg], poly.bary1[seg], poly.bary0[seg],
                        True, poly.center, poly.axis)
    seg = np.arange(poly.n_segments - 1, -1, -1)
    return Polyline(poly.points[::-1], poly.faces[seg], poly.bary1[seg], poly.bary0[seg],
                    False, poly.center, poly.axis)


# ---------------------------------------------------------------------------
# resampling


def _plane_frame(poly: Polyline) -> tuple[np.ndarray, np.ndarray]:
    """Centre and unit normal used to project the start reference."""
    centroid = poly.points.mean(axis=0)
    if poly.axis is not None:
        return (poly.center if poly.center is not None else centroid), poly.axis
    _, _, vt = np.linalg.svd(poly.points - centroid)
    return centroid, vt[-1]


def resample_ring(poly: Polyline, spacing: float, reference=None) -> SampledRing:
    """Points every ``spacing`` of arc length along ``poly``.

    The start is the point of the polyline nearest to ``center + u * rho``,
    where ``u`` is the reference direction (default +x, else +y) projected
    into the ring plane and ``rho`` the mean distance of the polyline to the
    centre. ``floor(L / spacing)`` samples are returned; fewer than three
    raises :class:`DegenerateRingError`.
    """
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    seg = poly.segment_vectors()
    seg_sq = np.einsum("ij,ij->i", seg, seg)
    seg_len = np.sqrt(seg_sq)
    total = float(seg_len.sum())
    count = int(np.floor(total / spacing + COUNT_TOL))
    if count < 3:
        raise DegenerateRingError(f"ring length {total:g} holds fewer than 3 samples")

    center, normal = _plane_frame(poly)
    refs = [np.asarray(reference, float)] if reference is not None else [
        np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])]
    u = None
    for ref in refs:
        cand = ref - (ref @ normal) * normal
        nrm = float(np.sqrt(cand @ cand))
        if nrm > 1e-9 * max(float(np.sqrt(ref @ ref)), 1e-300):
            u = cand / nrm
            break
    pts = poly.points
    if u is None:
        start = 0.0
    else:
        d = pts - center
        rho = float(np.sqrt(np.einsum("ij,ij->i", d, d)).mean())
        target = center + rho * u
        # nearest point on each segment
        base = pts[: len(seg)]
        rel = target - base
        tt = np.clip(np.einsum("ij,ij->i", rel, seg) / np.maximum(seg_sq, 1e-300), 0.0, 1.0)
        off = rel - tt[:, None] * seg
        k = int(np.argmin(np.einsum("ij,ij->i", off, off)))
        start = float(seg_len[:k].sum() + tt[k] * seg_len[k])

    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    arc = start + spacing * np.arange(count)
    arc = np.mod(arc, total) if poly.closed else np.minimum(arc - start, total)
    k = np.clip(np.searchsorted(cum, arc, side="right") - 1, 0, len(seg) - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(seg_len[k] > 0, (arc - cum[k]) / seg_len[k], 0.0)
    frac = np.clip(frac, 0.0, 1.0)
    out_pts = pts[k] + frac[:, None] * seg[k]
    if poly.faces is None:
        return SampledRing(out_pts, None, None, spacing)
    bary = (1.0 - frac)[:, None] * poly.bary0[k] + frac[:, None] * poly.bary1[k]
    return SampledRing(out_pts, poly.faces[k], bary, spacing)


def ring_set(mesh: TriMesh, vertex: int, radii, extractor: RingExtractor | None = None,
             reference=None) -> RingSet:
    """Resampled rings at all ``radii`` around ``vertex``.

    Empty or degenerate rings are recorded as ``None``. The start reference
    defaults to the direction towards the lowest-indexed neighbour, which
    makes sampling independent of the mesh's placement in space.
    """
    extractor = extractor or RingExtractor(mesh)
    radii = np.asarray(radii, float)
    center = mesh.vertices[vertex]
    if reference is None:
        nb = mesh.neighbors(vertex)
        reference = mesh.vertices[nb[0]] - center if len(nb) else None
    faces = extractor.candidate_faces(center, float(radii.max()))
    rings = []
    for r in radii:
        try:
            poly = extractor.extract(vertex, float(r), faces)
            rings.append(resample_ring(poly, 2 * np.pi * r / SAMPLES_PER_RING, reference))
        except RingError:
            rings.append(None)
    return RingSet(vertex, radii, rings)
