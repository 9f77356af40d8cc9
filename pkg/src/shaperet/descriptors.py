"""Ring-sampled local descriptors and the dataset-wide PCA reduction."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh, VertexGeometry, bbox
from .rings import RingExtractor, RingSet, SampledRing, histogram_sample, ring_radii, ring_set

N_SAMPLES = 7  # values kept per ring by histogram sampling
DEFAULT_RINGS = 5
KEEP_RATIO = 0.10


class DescriptorKind(str, enum.Enum):
    DTP = "DTP"
    ND = "ND"
    MEAN = "Mean"
    GAUSS = "Gauss"
    SI = "SI"
    CI = "CI"

    @property
    def channels(self) -> int:
        return 2 if self is DescriptorKind.ND else 1

    def length(self, n_rings: int = DEFAULT_RINGS) -> int:
        return self.channels * n_rings * N_SAMPLES

    @classmethod
    def parse(cls, name: str) -> "DescriptorKind":
        for k in cls:
            if k.value.lower() == name.strip().lower():
                return k
        raise ValueError(f"unknown descriptor kind {name!r}")


CURVATURE_KINDS = (DescriptorKind.MEAN, DescriptorKind.GAUSS, DescriptorKind.SI, DescriptorKind.CI)


@dataclass(frozen=True, eq=False)
class DescriptorField:
    mesh_id: str
    kind: DescriptorKind
    vectors: np.ndarray  # (V, channels * R * S)


# ---------------------------------------------------------------------------
# per-sample scalars


def shape_index(k1, k2):
    """``(2/pi) atan((k2 + k1) / (k2 - k1))`` with ``k1 >= k2``; 0 on planar points."""
    k1 = np.asarray(k1, float)
    k2 = np.asarray(k2, float)
    hi, lo = np.maximum(k1, k2), np.minimum(k1, k2)
    # atan(n / d) with d = lo - hi <= 0 equals atan2(-n, -d)
    return (2.0 / np.pi) * np.arctan2(-(hi + lo), hi - lo)


def curvature_index(k1, k2):
    k1 = np.asarray(k1, float)
    k2 = np.asarray(k2, float)
    return np.sqrt(0.5 * (k1 * k1 + k2 * k2))


def curvature_scalar(kind: DescriptorKind, k1, k2):
    k1 = np.asarray(k1, float)
    k2 = np.asarray(k2, float)
    if kind is DescriptorKind.MEAN:
        return 0.5 * (k1 + k2)
    if kind is DescriptorKind.GAUSS:
        return k1 * k2
    if kind is DescriptorKind.SI:
        return shape_index(k1, k2)
    if kind is DescriptorKind.CI:
        return curvature_index(k1, k2)
    raise ValueError(f"{kind} is not a curvature descriptor")


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


def projected_angle(n_ref: np.ndarray, n_other: np.ndarray, p_ref: np.ndarray, p_other: np.ndarray):
    """Angle between ``n_ref`` and ``n_other`` projected onto the plane
    through ``p_ref``, ``p_ref + n_ref`` and ``p_other``.

    Row-wise over arrays of shape (n, 3). Returns radians in [0, pi]; 0 when
    the projection vanishes.
    """
    m = np.cross(n_ref, p_other - p_ref)
    m_len = np.linalg.norm(m, axis=-1, keepdims=True)
    m = np.where(m_len > 1e-300, m / np.where(m_len > 0, m_len, 1.0), 0.0)
    proj = n_other - np.sum(n_other * m, axis=-1, keepdims=True) * m
    c = np.sum(n_ref * proj, axis=-1)
    s = np.linalg.norm(np.cross(n_ref, proj), axis=-1)
    return np.arctan2(s, c)


def best_fit_plane(points: np.ndarray, orient=None) -> tuple[np.ndarray, np.ndarray]:
    """Total-least-squares plane (centroid, unit normal)."""
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    n = vt[-1]
    if orient is not None and n @ orient < 0:
        n = -n
    return c, n


def _ring_values(kind: DescriptorKind, mesh: TriMesh, geometry: VertexGeometry, vertex: int,
                 ring: SampledRing) -> list[np.ndarray]:
    """Per-sample scalar(s) on one ring, one array per channel."""
    n_p = geometry.normals[vertex]
    if kind is DescriptorKind.DTP:
        c, n = best_fit_plane(ring.points, n_p)
        return [(ring.points - c) @ n]
    if kind is DescriptorKind.ND:
        p = mesh.vertices[vertex]
        n_q = _unit(ring.interpolate(mesh, geometry.normals))
        q = ring.points
        ch1 = projected_angle(np.broadcast_to(n_p, q.shape), n_q, np.broadcast_to(p, q.shape), q)
        ch2 = projected_angle(n_q, np.roll(n_q, -1, axis=0), q, np.roll(q, -1, axis=0))
        return [ch1, ch2]
    k1 = ring.interpolate(mesh, geometry.kappa1)
    k2 = ring.interpolate(mesh, geometry.kappa2)
    return [curvature_scalar(kind, k1, k2)]


def _value_at_center(kind: DescriptorKind, geometry: VertexGeometry, vertex: int) -> list[float]:
    if kind is DescriptorKind.DTP:
        return [0.0]
    if kind is DescriptorKind.ND:
        return [0.0, 0.0]
    return [float(curvature_scalar(kind, geometry.kappa1[vertex], geometry.kappa2[vertex]))]


def eval_descriptor(kind: DescriptorKind, mesh: TriMesh, geometry: VertexGeometry, vertex: int,
                    rings: RingSet) -> np.ndarray:
    """Raw descriptor vector at ``vertex``.

    Layout is channel-major, then ring (innermost first), then the seven
    histogram-sampled values. Rings that are empty or too short are filled
    with the descriptor value at the vertex itself.
    """
    kind = DescriptorKind(kind)
    per_channel: list[list[np.ndarray]] = [[] for _ in range(kind.channels)]
    for ring in rings.rings:
        if ring is None:
            vals = [np.full(N_SAMPLES, v) for v in _value_at_center(kind, geometry, vertex)]
        else:
            vals = [histogram_sample(ch) for ch in _ring_values(kind, mesh, geometry, vertex, ring)]
        for c in range(kind.channels):
            per_channel[c].append(vals[c])
    return np.concatenate([np.concatenate(ch) for ch in per_channel])


def describe_mesh(mesh: TriMesh, geometry: VertexGeometry, kinds, n_rings: int = DEFAULT_RINGS,
                  vertices=None) -> dict[DescriptorKind, DescriptorField]:
    """Descriptor fields for several kinds, sharing one ring extraction per vertex."""
    kinds = [DescriptorKind(k) for k in kinds]
    radii = ring_radii(bbox(mesh).diagonal, n_rings)
    extractor = RingExtractor(mesh)
    idx = np.arange(mesh.n_vertices) if vertices is None else np.asarray(vertices)
    out = {k: np.empty((len(idx), k.length(n_rings))) for k in kinds}
    for row, v in enumerate(idx.tolist()):
        rs = ring_set(mesh, v, radii, extractor)
        for k in kinds:
            out[k][row] = eval_descriptor(k, mesh, geometry, v, rs)
    return {k: DescriptorField(mesh.id, k, out[k]) for k in kinds}


# ---------------------------------------------------------------------------
# reduction


@dataclass(frozen=True, eq=False)
class ReductionModel:
    mean: np.ndarray
    basis: np.ndarray  # (input_dim, kept) orthonormal columns
    eigenvalues: np.ndarray  # full spectrum, descending
    lo: np.ndarray
    hi: np.ndarray
    kind: str = ""

    @property
    def kept(self) -> int:
        return self.basis.shape[1]

    @property
    def input_dim(self) -> int:
        return self.basis.shape[0]

    def project(self, x: np.ndarray) -> np.ndarray:
        # einsum keeps each row's arithmetic independent of the batch size
        x = np.asarray(x, float) - self.mean
        return np.einsum("...j,jk->...k", x, self.basis)

    def save(self, path) -> None:
        np.savez(path, mean=self.mean, basis=self.basis, eigenvalues=self.eigenvalues,
                 lo=self.lo, hi=self.hi, kind=np.array(self.kind))

    @classmethod
    def load(cls, path) -> "ReductionModel":
        with np.load(path) as z:
            return cls(z["mean"], z["basis"], z["eigenvalues"], z["lo"], z["hi"], str(z["kind"]))


def kept_dimensions(eigenvalues, ratio: float = KEEP_RATIO) -> int:
    """Leading count of eigenvalues not below ``ratio`` times the largest (at least 1)."""
    ev = np.asarray(eigenvalues, float)
    if len(ev) == 0 or ev[0] <= 0:
        return 1
    below = np.flatnonzero(ev < ratio * ev[0])
    return int(below[0]) if len(below) else len(ev)


def fit_reduction(fields, kind=None) -> ReductionModel:
    """PCA over all vectors of all fields of one kind.

    ``fields`` is an iterable of :class:`DescriptorField` (or raw arrays).
    Fields are stacked in mesh-id order so the result does not depend on
    the order they were produced in. Eigenvector signs are fixed so the
    largest-magnitude component of each is positive.
    """
    items = list(fields)
    if items and isinstance(items[0], DescriptorField):
        if kind is not None:
            items = [f for f in items if f.kind == DescriptorKind(kind)]
        items = [f.vectors for f in sorted(items, key=lambda f: f.mesh_id)]
    x = np.vstack([np.atleast_2d(np.asarray(a, float)) for a in items]) if items else np.empty((0, 0))
    if len(x) < 2:
        raise ValueError("reduction needs at least two vectors")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (len(x) - 1)
    ev, vecs = np.linalg.eigh(cov)
    order = np.argsort(ev)[::-1]
    ev, vecs = np.clip(ev[order], 0.0, None), vecs[:, order]
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    vecs = vecs * np.where(signs == 0, 1.0, signs)

    keep = kept_dimensions(ev)
    basis = vecs[:, :keep].copy()
    name = DescriptorKind(kind).value if kind is not None else ""
    model = ReductionModel(mean, basis, ev, np.zeros(keep), np.zeros(keep), name)
    proj = model.project(x)
    return ReductionModel(mean, basis, ev, proj.min(axis=0), proj.max(axis=0), name)


def apply_reduction(model: ReductionModel, raw) -> np.ndarray:
    """Project onto the kept directions and min-max normalize into [0, 1].

    Accepts one vector or a 2-D stack. Dimensions without spread map to 0.5.
    """
    x = np.asarray(raw, float)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"vector length {x.shape[-1]} does not match model input {model.input_dim}")
    proj = model.project(x)
    span = model.hi - model.lo
    flat = span <= 0
    out = (proj - model.lo) / np.where(flat, 1.0, span)
    out = np.where(flat, 0.5, out)
    return np.clip(out, 0.0, 1.0)
