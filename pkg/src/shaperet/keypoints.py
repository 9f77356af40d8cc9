"""Sample-point selection: uniform random, mesh saliency, multi-resolution
salient points and the 3D Harris detector."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .decimate import decimate
from .mesh import MeshError, TriMesh, VertexGeometry, bbox, estimate_geometry, ring_neighborhoods

log = logging.getLogger(__name__)

SALIENCY_EPS = 0.003  # fraction of the bbox diagonal
SALIENCY_SCALES = (2, 3, 4, 5, 6)
CASTELLANI_EPS = 0.001
CASTELLANI_SCALES = (1, 2, 3, 4, 5, 6)
CASTELLANI_LEVELS = (0.0, 0.2, 0.4, 0.6, 0.8)
CASTELLANI_PERCENTILE = 85.0
CASTELLANI_MIN_LEVELS = 3
# a saliency map whose spread is below this fraction of the curvature
# magnitude is treated as featureless
FLAT_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class SamplePointSet:
    mesh_id: str
    method: str
    indices: np.ndarray
    scores: np.ndarray | None = None
    flagged: bool = False
    note: str = ""

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class SaliencyField:
    method: str
    scale_maps: list = field(default_factory=list)
    combined: np.ndarray | None = None


@dataclass(frozen=True)
class HarrisParams:
    neighborhood_type: str = "adaptive"  # "adaptive" or "rings"
    neighborhood_param: float = 0.01  # bbox fraction (adaptive) or ring count (rings)
    k: float = 0.04
    ring_maxima: int = 1
    selection_fraction: float = 0.01

    def __post_init__(self):
        if self.neighborhood_type not in ("adaptive", "rings"):
            raise ValueError(f"unknown neighborhood type {self.neighborhood_type!r}")
        if self.neighborhood_param <= 0:
            raise ValueError("neighborhood parameter must be positive")
        if not 0 < self.selection_fraction <= 1:
            raise ValueError("selection fraction must lie in (0, 1]")
        if self.ring_maxima < 1:
            raise ValueError("ring_maxima must be >= 1")


HARRIS_PRESETS = {
    "harris-adaptive": HarrisParams("adaptive", 0.01, 0.04, 1, 0.01),
    "harris-rings": HarrisParams("rings", 1, 0.01, 1, 0.05),
}


# ---------------------------------------------------------------------------
# shared helpers


def local_maxima(values: np.ndarray, reach: sparse.csr_matrix) -> np.ndarray:
    """Vertices strictly greater than every other vertex in their neighborhood."""
    out = np.zeros(len(values), dtype=bool)
    for v in range(len(values)):
        nb = reach.indices[reach.indptr[v]:reach.indptr[v + 1]]
        nb = nb[nb != v]
        out[v] = len(nb) > 0 and bool(np.all(values[v] > values[nb]))
    return np.flatnonzero(out)


def gaussian_average(values: np.ndarray, dist: sparse.coo_matrix, sigma: float, cutoff: float) -> np.ndarray:
    """Gaussian-weighted neighborhood mean of ``values`` (scalar or vector).

    ``dist`` holds pairwise distances of all pairs closer than some bound
    (diagonal excluded); pairs at or beyond ``cutoff`` are ignored. Each
    vertex always contributes to its own average with weight 1.
    """
    keep = dist.data < cutoff
    i, j, d = dist.row[keep], dist.col[keep], dist.data[keep]
    w = np.exp(-(d * d) / (2 * sigma * sigma))
    n = values.shape[0]
    wsum = np.ones(n) + np.bincount(i, weights=w, minlength=n)
    if values.ndim == 1:
        acc = values + np.bincount(i, weights=w * values[j], minlength=n)
        return acc / wsum
    acc = values.copy()
    for c in range(values.shape[1]):
        acc[:, c] += np.bincount(i, weights=w * values[j, c], minlength=n)
    return acc / wsum[:, None]


def _pair_distances(points: np.ndarray, bound: float) -> sparse.coo_matrix:
    tree = cKDTree(points)
    m = tree.sparse_distance_matrix(tree, bound, output_type="coo_matrix")
    off = m.row != m.col
    return sparse.coo_matrix((m.data[off], (m.row[off], m.col[off])), shape=m.shape)


def _normalized(x: np.ndarray, floor: float) -> np.ndarray:
    """Divide by the maximum, or zero the map if its maximum is below ``floor``."""
    top = float(x.max()) if len(x) else 0.0
    if top <= floor or top <= 0:
        return np.zeros_like(x)
    return x / top


# ---------------------------------------------------------------------------
# detectors


def random_points(mesh: TriMesh, n: int, seed: int) -> SamplePointSet:
    """``n`` distinct vertices drawn uniformly without replacement."""
    if not 1 <= n <= mesh.n_vertices:
        raise ValueError(f"cannot draw {n} distinct vertices from {mesh.n_vertices}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(mesh.n_vertices, size=n, replace=False)
    return SamplePointSet(mesh.id, "random", idx.astype(np.int64))


def saliency_field(mesh: TriMesh, geometry: VertexGeometry) -> SaliencyField:
    """Multi-scale difference-of-Gaussians of mean curvature with non-linear suppression."""
    diag = bbox(mesh).diagonal
    eps = SALIENCY_EPS * diag
    h = geometry.mean_curvature
    h_scale = float(np.abs(h).max()) if len(h) else 0.0
    dist = _pair_distances(mesh.vertices, 4 * max(SALIENCY_SCALES) * eps)
    ring1 = ring_neighborhoods(mesh, 1)

    maps = []
    total = np.zeros(mesh.n_vertices)
    for s in SALIENCY_SCALES:
        sigma = s * eps
        g_in = gaussian_average(h, dist, sigma, 2 * sigma)
        g_out = gaussian_average(h, dist, 2 * sigma, 4 * sigma)
        gamma = _normalized(np.abs(g_in - g_out), FLAT_TOL * h_scale)
        maps.append(gamma)
        if not gamma.any():
            continue
        peaks = local_maxima(gamma, ring1)
        mean_peak = float(gamma[peaks].mean()) if len(peaks) else 0.0
        total += gamma * (gamma.max() - mean_peak) ** 2
    return SaliencyField("mesh-saliency", maps, total)


def mesh_saliency(mesh: TriMesh, geometry: VertexGeometry | None = None) -> SamplePointSet:
    """Local maxima of total saliency that exceed the mean over all maxima."""
    geometry = geometry or estimate_geometry(mesh)
    sal = saliency_field(mesh, geometry)
    gamma = sal.combined
    if not gamma.any():
        return SamplePointSet(mesh.id, "mesh-saliency", np.empty(0, np.int64), np.empty(0), True,
                              "featureless saliency map")
    cand = local_maxima(gamma, ring_neighborhoods(mesh, 1))
    if len(cand) == 0:
        return SamplePointSet(mesh.id, "mesh-saliency", np.empty(0, np.int64), np.empty(0), True,
                              "no local maxima")
    sel = cand[gamma[cand] > gamma[cand].mean()]
    return SamplePointSet(mesh.id, "mesh-saliency", sel, gamma[sel], len(sel) == 0,
                          "" if len(sel) else "no candidate above the mean")


def castellani_level(mesh: TriMesh, diag: float) -> np.ndarray:
    """Salient vertices of one resolution level (indices into ``mesh``)."""
    eps = CASTELLANI_EPS * diag
    normals = mesh.vertex_normals
    dist = _pair_distances(mesh.vertices, 4 * max(CASTELLANI_SCALES) * eps)
    ring2 = ring_neighborhoods(mesh, 2)
    total = np.zeros(mesh.n_vertices)
    for s in CASTELLANI_SCALES:
        sigma = s * eps
        dog = (gaussian_average(mesh.vertices, dist, sigma, 2 * sigma)
               - gaussian_average(mesh.vertices, dist, 2 * sigma, 4 * sigma))
        # with no neighbor inside the inner window the fine smoothing is the
        # identity and the difference only reflects the sampling pattern
        resolved = np.bincount(dist.row[dist.data < 2 * sigma], minlength=mesh.n_vertices) > 0
        response = np.where(resolved, np.abs(np.einsum("ij,ij->i", dog, normals)), 0.0)
        m = _normalized(response, 1e-9 * diag)
        if not m.any():
            continue
        total += m + inhibit(m, ring2)
    if not total.any():
        return np.empty(0, np.int64)
    return local_maxima(total, ring_neighborhoods(mesh, 1))


def inhibit(values: np.ndarray, reach: sparse.csr_matrix, percentile: float = CASTELLANI_PERCENTILE) -> np.ndarray:
    """Keep a value only where it exceeds the given percentile of its neighbors."""
    out = np.zeros_like(values)
    for v in range(len(values)):
        nb = reach.indices[reach.indptr[v]:reach.indptr[v + 1]]
        nb = nb[nb != v]
        if len(nb) and values[v] > np.percentile(values[nb], percentile):
            out[v] = values[v]
    return out


def castellani_points(mesh: TriMesh, levels=CASTELLANI_LEVELS,
                      min_levels: int = CASTELLANI_MIN_LEVELS) -> SamplePointSet:
    """Vertices salient in at least ``min_levels`` of the decimated copies."""
    diag = bbox(mesh).diagonal
    votes = np.zeros(mesh.n_vertices, dtype=np.int64)
    used = 0
    for d in levels:
        try:
            dec = decimate(mesh, d)
        except MeshError as exc:
            log.warning("%s: decimation %.2f failed (%s); skipping level", mesh.id, d, exc)
            continue
        if dec.exhausted:
            log.warning("%s: decimation %.2f stopped early", mesh.id, d)
        local = castellani_level(dec.mesh, diag)
        votes[dec.correspondence[local]] += 1
        used += 1
    sel = np.flatnonzero(votes >= min_levels)
    flagged = used < min_levels
    return SamplePointSet(mesh.id, "castellani", sel, votes[sel].astype(float), flagged,
                          f"{used} levels" if flagged else "")


def harris_response(e: np.ndarray, k: float) -> float:
    e = np.asarray(e, float)
    return float(np.linalg.det(e) - k * np.trace(e) ** 2)


def harris_matrix(coef: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian-weighted autocorrelation of the fitted surface gradient.

    ``coef`` are the coefficients of ``z = c0 x^2 + c1 xy + c2 y^2 + c3 x +
    c4 y + c5``. Integrals are evaluated in closed form with the weight
    ``exp(-(x^2+y^2) / 2 sigma^2) / sqrt(2 pi sigma)``.
    """
    c0, c1, c2, c3, c4 = coef[:5]
    s2 = sigma * sigma
    # integral of the Gaussian kernel over the plane divided by the prefactor
    mass = 2 * np.pi * s2 / np.sqrt(2 * np.pi * sigma)
    a = 4 * c0 * c0 * s2 + c1 * c1 * s2 + c3 * c3
    b = c1 * c1 * s2 + 4 * c2 * c2 * s2 + c4 * c4
    c = 2 * c0 * c1 * s2 + 2 * c1 * c2 * s2 + c3 * c4
    return mass * np.array([[a, c], [c, b]])


def _neighborhood(mesh: TriMesh, v: int, params: HarrisParams, diag: float) -> np.ndarray:
    verts = mesh.vertices
    if params.neighborhood_type == "rings":
        rings = int(params.neighborhood_param)
        limit = None
    else:
        rings = None
        limit = params.neighborhood_param * diag
    seen = {v}
    frontier = [v]
    depth = 0
    while frontier:
        if rings is not None and depth >= rings:
            break
        if limit is not None:
            ext = np.linalg.norm(verts[list(seen)] - verts[v], axis=1).max()
            if ext >= limit:
                break
        nxt = []
        for u in frontier:
            for w in mesh.neighbors(u).tolist():
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
        depth += 1
    return np.array(sorted(seen))


def harris_scores(mesh: TriMesh, params: HarrisParams) -> np.ndarray:
    """Harris operator value at every vertex."""
    diag = bbox(mesh).diagonal
    verts = mesh.vertices
    out = np.zeros(mesh.n_vertices)
    for v in range(mesh.n_vertices):
        nb = _neighborhood(mesh, v, params, diag)
        if len(nb) < 6:
            continue
        pts = verts[nb]
        centroid = pts.mean(axis=0)
        _, _, vt = np.linalg.svd(pts - centroid, full_matrices=False)
        local = (pts - verts[v]) @ vt.T  # plane is xy, vertex at origin
        x, y, z = local[:, 0], local[:, 1], local[:, 2]
        a = np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])
        coef, _, rank, _ = np.linalg.lstsq(a, z, rcond=None)
        if rank < 6:
            continue
        extent = float(np.sqrt(x * x + y * y).max())
        if extent <= 0:
            continue
        out[v] = harris_response(harris_matrix(coef, extent / 2), params.k)
    return out


def harris3d(mesh: TriMesh, params: HarrisParams | str = "harris-adaptive") -> SamplePointSet:
    """3D Harris interest points.

    Vertices are ranked local maxima first (over ``ring_maxima`` rings),
    then the remaining vertices, each group by descending response with
    ties broken by index; the first ``ceil(selection_fraction * V)`` are
    returned. Raising the fraction therefore only ever adds points.
    """
    name = params if isinstance(params, str) else "harris"
    if isinstance(params, str):
        params = HARRIS_PRESETS[params]
    h = harris_scores(mesh, params)
    maxima = np.zeros(mesh.n_vertices, dtype=bool)
    maxima[local_maxima(h, ring_neighborhoods(mesh, params.ring_maxima))] = True
    order = np.lexsort((np.arange(mesh.n_vertices), -h, ~maxima))
    count = int(np.ceil(params.selection_fraction * mesh.n_vertices - 1e-9))
    sel = order[:count]
    return SamplePointSet(mesh.id, name, sel, h[sel])


def detect(mesh: TriMesh, method: str, n: int = 0, seed: int = 0,
           geometry: VertexGeometry | None = None) -> SamplePointSet:
    """Dispatch by method name: random, mesh-saliency, castellani, harris-*."""
    if method == "random":
        return random_points(mesh, n, seed)
    if method == "mesh-saliency":
        return mesh_saliency(mesh, geometry)
    if method == "castellani":
        return castellani_points(mesh)
    if method in HARRIS_PRESETS:
        return harris3d(mesh, method)
    raise ValueError(f"unknown sampling method {method!r}")


# ---------------------------------------------------------------------------
# text format


def format_point_set(points: SamplePointSet) -> str:
    lines = [f"# mesh {points.mesh_id}", f"# method {points.method}"]
    if points.flagged:
        lines.append(f"# flagged {points.note}")
    for i, v in enumerate(points.indices.tolist()):
        if points.scores is not None:
            lines.append(f"{v} {float(points.scores[i])!r}")
        else:
            lines.append(str(v))
    return "\n".join(lines) + "\n"


def parse_point_set(text: str) -> SamplePointSet:
    mesh_id, method, flagged, note = "", "", False, ""
    idx, scores = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(" ")
            if key == "mesh":
                mesh_id = val
            elif key == "method":
                method = val
            elif key == "flagged":
                flagged, note = True, val
            continue
        toks = line.split()
        idx.append(int(toks[0]))
        if len(toks) > 1:
            scores.append(float(toks[1]))
    sc = np.array(scores) if scores and len(scores) == len(idx) else None
    return SamplePointSet(mesh_id, method, np.array(idx, dtype=np.int64), sc, flagged, note)
