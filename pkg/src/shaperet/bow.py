"""Visual dictionaries, word histograms and the dissimilarity matrix."""

from __future__ import annotations

import csv
import io
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

DICT_MAGIC = b"SRDICT\x00\x00"
DICT_VERSION = 1
MATRIX_MAGIC = b"SRDMAT\x00\x00"
MATRIX_VERSION = 1
# rounding slack when checking that the objective never grows
OBJECTIVE_RTOL = 1e-12


class KMeansError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dictionary:
    centers: np.ndarray  # (D, dim)
    kind: str = ""
    seed: int = 0
    iterations: int = 0
    objective: float = 0.0
    history: tuple = ()

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def to_bytes(self) -> bytes:
        kind = self.kind.encode()
        head = struct.pack("<8sIH", DICT_MAGIC, DICT_VERSION, len(kind)) + kind
        head += struct.pack("<IIqIdI", self.size, self.dim, self.seed, self.iterations, self.objective,
                            len(self.history))
        hist = np.asarray(self.history, "<f8").tobytes()
        return head + hist + np.ascontiguousarray(self.centers, "<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Dictionary":
        magic, version, klen = struct.unpack_from("<8sIH", data, 0)
        if magic != DICT_MAGIC or version != DICT_VERSION:
            raise ValueError("not a dictionary file (bad magic or version)")
        off = struct.calcsize("<8sIH")
        kind = data[off:off + klen].decode()
        off += klen
        d, dim, seed, iters, obj, nh = struct.unpack_from("<IIqIdI", data, off)
        off += struct.calcsize("<IIqIdI")
        hist = np.frombuffer(data, "<f8", nh, off)
        off += 8 * nh
        if len(data) - off != 8 * d * dim:
            raise ValueError("truncated dictionary file")
        centers = np.frombuffer(data, "<f8", d * dim, off).reshape(d, dim).astype(float)
        return cls(centers, kind, seed, iters, obj, tuple(hist.tolist()))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Dictionary":
        return cls.from_bytes(Path(path).read_bytes())


def _sq_distances(x: np.ndarray, centers: np.ndarray, workers: int = 1) -> np.ndarray:
    """Squared distances, chunked over rows. Each row is computed on its own,
    so the result does not depend on chunking or worker count."""
    chunk = max(1, (1 << 22) // max(1, centers.shape[0] * max(1, x.shape[1])))
    starts = range(0, len(x), chunk)
    if workers <= 1 or len(x) <= chunk:
        parts = [cdist(x[s:s + chunk], centers, "sqeuclidean") for s in starts]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda s: cdist(x[s:s + chunk], centers, "sqeuclidean"), starts))
    return np.vstack(parts) if parts else np.empty((0, len(centers)))


def _assign(x: np.ndarray, centers: np.ndarray, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    d = _sq_distances(x, centers, workers)
    labels = np.argmin(d, axis=1)  # first minimum, so ties go to the lowest index
    return labels, d[np.arange(len(x)), labels]


def _kmeanspp(x: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: each step draws a few candidates by D^2 weighting
    and keeps the one that lowers the potential most."""
    n = len(x)
    trials = 2 + int(math.log(d)) if d > 1 else 1
    idx = [int(rng.integers(n))]
    closest = cdist(x, x[idx], "sqeuclidean")[:, 0]
    for _ in range(1, d):
        total = closest.sum()
        cum = np.cumsum(closest)
        picks = np.searchsorted(cum, rng.random(trials) * total, side="right")
        picks = np.minimum(picks, n - 1)
        # never pick a point that already coincides with a center
        picks = np.where(closest[picks] > 0, picks, int(np.argmax(closest)))
        cand = np.minimum(closest[None, :], cdist(x[picks], x, "sqeuclidean"))
        best = int(np.argmin(cand.sum(axis=1)))
        idx.append(int(picks[best]))
        closest = cand[best]
    return x[idx].copy()


def _update(x: np.ndarray, labels: np.ndarray, centers: np.ndarray, dist: np.ndarray) -> np.ndarray:
    d, dim = centers.shape
    counts = np.bincount(labels, minlength=d)
    sums = np.column_stack([np.bincount(labels, weights=x[:, c], minlength=d) for c in range(dim)])
    out = centers.copy()
    full = counts > 0
    out[full] = sums[full] / counts[full, None]
    empty = np.flatnonzero(~full)
    if len(empty):
        # farthest points from their own centers, distinct from every live center
        order = np.lexsort((np.arange(len(x)), -dist))
        taken = [out[full]]
        k = 0
        for e in empty:
            while k < len(order):
                p = x[order[k]]
                k += 1
                if not any(np.any(np.all(t == p, axis=1)) for t in taken):
                    out[e] = p
                    taken.append(p[None, :])
                    break
    return out


def kmeans(vectors, d: int, seed: int = 0, max_iter: int = 100, workers: int = 1, kind: str = "") -> Dictionary:
    """Lloyd's k-means with k-means++ seeding.

    Iterates until the assignment stops changing or ``max_iter`` updates
    have run. Clusters that lose all members are re-seeded at the point
    farthest from its center. ``history`` holds the objective (sum of
    squared distances to assigned centers) after every assignment; it is
    checked to be non-increasing.
    """
    x = np.ascontiguousarray(vectors, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise KMeansError("k-means needs a non-empty 2-D array of vectors")
    if d < 1:
        raise KMeansError("dictionary size must be at least 1")
    if max_iter < 1:
        raise KMeansError("max_iter must be at least 1")
    distinct = len(np.unique(x, axis=0))
    if d > distinct:
        raise KMeansError(f"cannot form {d} clusters from {distinct} distinct vectors")

    rng = np.random.default_rng(seed)
    centers = _kmeanspp(x, d, rng)
    labels, dist = _assign(x, centers, workers)
    history = [float(dist.sum())]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        centers = _update(x, labels, centers, dist)
        new_labels, dist = _assign(x, centers, workers)
        history.append(float(dist.sum()))
        if history[-1] > history[-2] * (1 + OBJECTIVE_RTOL) + 1e-300:
            raise KMeansError(f"objective increased at iteration {iterations}")
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return Dictionary(centers, kind, seed, iterations, history[-1], tuple(history))


def assign_words(vectors, dictionary: Dictionary) -> np.ndarray:
    x = np.atleast_2d(np.asarray(vectors, float))
    if x.shape[1] != dictionary.dim:
        raise ValueError(f"vector dimension {x.shape[1]} does not match dictionary dimension {dictionary.dim}")
    return _assign(x, dictionary.centers)[0]


def assign_word(vector, dictionary: Dictionary) -> int:
    """Index of the nearest center; ties go to the lowest index."""
    v = np.asarray(vector, float)
    if v.ndim != 1:
        raise ValueError("assign_word takes a single vector")
    return int(assign_words(v[None, :], dictionary)[0])


@dataclass(frozen=True, eq=False)
class Signature:
    mesh_id: str
    histogram: np.ndarray
    n_samples: int


def build_signature(vectors, dictionary: Dictionary, mesh_id: str = "") -> Signature:
    """Word frequencies of the sample vectors, normalized by the sample count."""
    x = np.asarray(vectors, float)
    if x.size == 0:
        raise ValueError(f"no sample vectors for mesh {mesh_id!r}")
    words = assign_words(x, dictionary)
    hist = np.bincount(words, minlength=dictionary.size) / len(words)
    return Signature(mesh_id, hist, len(words))


def combine_histograms(a: Signature, b: Signature) -> Signature:
    """Concatenate two histograms over dictionaries of equal size (no renormalization)."""
    if len(a.histogram) != len(b.histogram):
        raise ValueError("histograms come from dictionaries of different sizes")
    return Signature(a.mesh_id, np.concatenate([a.histogram, b.histogram]), a.n_samples + b.n_samples)


def combine_vectors(field_a, field_b, mode: str, points_a, points_b) -> np.ndarray:
    """Concatenate per-point reduced vectors of two descriptor kinds.

    ``same_points`` (VS) uses one point set for both kinds; ``different_points``
    (VD) pairs the i-th point of each set.
    """
    a = np.asarray(field_a, float)
    b = np.asarray(field_b, float)
    pa = np.asarray(points_a, dtype=np.int64)
    pb = np.asarray(points_b, dtype=np.int64)
    mode = {"vs": "same_points", "vd": "different_points"}.get(mode.lower(), mode)
    if mode == "same_points":
        if not np.array_equal(pa, pb):
            raise ValueError("same-points combination needs identical point sets")
    elif mode == "different_points":
        if len(pa) != len(pb):
            raise ValueError(f"different-points combination needs equal counts ({len(pa)} vs {len(pb)})")
    else:
        raise ValueError(f"unknown combination mode {mode!r}")
    return np.hstack([a[pa], b[pb]])


def dissimilarity(a, b) -> float:
    ha = a.histogram if isinstance(a, Signature) else np.asarray(a, float)
    hb = b.histogram if isinstance(b, Signature) else np.asarray(b, float)
    if ha.shape != hb.shape:
        raise ValueError("signatures differ in length")
    return float(np.sqrt(np.sum((ha - hb) ** 2)))


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    ids: tuple
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.shape != (len(self.ids), len(self.ids)):
            raise ValueError("matrix shape does not match id count")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate mesh ids")

    def index(self, mesh_id: str) -> int:
        try:
            return self.ids.index(mesh_id)
        except ValueError:
            raise KeyError(f"unknown mesh id {mesh_id!r}") from None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + list(self.ids))
        for mid, row in zip(self.ids, self.values):
            w.writerow([mid] + [repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DistanceMatrix":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows:
            raise ValueError("empty matrix file")
        ids = tuple(rows[0][1:])
        body = rows[1:]
        if [r[0] for r in body] != list(ids):
            raise ValueError("row ids do not match column ids")
        values = np.array([[float(x) for x in r[1:]] for r in body]).reshape(len(ids), len(ids))
        return cls(ids, values)

    def to_bytes(self) -> bytes:
        out = [struct.pack("<8sII", MATRIX_MAGIC, MATRIX_VERSION, len(self.ids))]
        for mid in self.ids:
            b = mid.encode()
            out.append(struct.pack("<H", len(b)) + b)
        out.append(np.ascontiguousarray(self.values, "<f8").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "DistanceMatrix":
        magic, version, m = struct.unpack_from("<8sII", data, 0)
        if magic != MATRIX_MAGIC or version != MATRIX_VERSION:
            raise ValueError("not a distance matrix file (bad magic or version)")
        off = struct.calcsize("<8sII")
        ids = []
        for _ in range(m):
            (n,) = struct.unpack_from("<H", data, off)
            off += 2
            ids.append(data[off:off + n].decode())
            off += n
        values = np.frombuffer(data, "<f8", m * m, off).reshape(m, m).astype(float)
        return cls(tuple(ids), values)

    def save(self, path) -> None:
        """Write ``path`` (CSV) and a binary twin with suffix ``.bin``."""
        path = Path(path)
        path.write_text(self.to_csv())
        path.with_suffix(".bin").write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "DistanceMatrix":
        path = Path(path)
        if path.suffix == ".bin":
            return cls.from_bytes(path.read_bytes())
        return cls.from_csv(path.read_text())


def distance_matrix(signatures) -> DistanceMatrix:
    """Pairwise Euclidean distances between signatures."""
    sigs = list(signatures)
    lengths = {len(s.histogram) for s in sigs}
    if len(lengths) > 1:
        raise ValueError(f"signatures have mixed lengths {sorted(lengths)}")
    ids = tuple(s.mesh_id for s in sigs)
    if len(sigs) < 2:
        return DistanceMatrix(ids, np.zeros((len(sigs), len(sigs))))
    h = np.vstack([s.histogram for s in sigs])
    return DistanceMatrix(ids, squareform(pdist(h, "euclidean")))
