"""Retrieval statistics over a distance matrix and a class labeling."""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bow import DistanceMatrix

log = logging.getLogger(__name__)

E_MEASURE_K = 32
# slack when comparing recall values against interpolation levels
RECALL_TOL = 1e-12


class LabelParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Labeling:
    classes: dict  # mesh id -> class name

    def __len__(self) -> int:
        return len(self.classes)

    def class_sizes(self) -> dict:
        sizes: dict = {}
        for c in self.classes.values():
            sizes[c] = sizes.get(c, 0) + 1
        return sizes

    def resolve(self, mesh_id: str) -> str:
        """Class of ``mesh_id``; ids differing only by a non-numeric prefix
        (``T12`` vs ``12``) are matched when unambiguous."""
        if mesh_id in self.classes:
            return self.classes[mesh_id]
        digits = re.sub(r"^\D+", "", mesh_id)
        if digits and digits in self.classes:
            return self.classes[digits]
        raise KeyError(f"mesh {mesh_id!r} has no label")

    def for_ids(self, ids) -> list[str]:
        return [self.resolve(i) for i in ids]


def parse_cla(text: str) -> Labeling:
    """Read a Princeton-benchmark ``.cla`` file, or ``id,class`` CSV lines.

    Classes that only act as parents hold no models, so every model ends up
    under the leaf class it is listed in.
    """
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    body = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not body:
        raise LabelParseError("empty label file")
    if not body[0][1].startswith("PSB"):
        return _parse_csv_labels(body)

    no, head = body[0]
    toks = head.split()
    if len(toks) != 2 or not toks[1].isdigit():
        raise LabelParseError("malformed header, expected 'PSB <version>'", no)
    if len(body) < 2:
        raise LabelParseError("missing class/model counts", no)
    no, counts = body[1]
    try:
        n_classes, n_models = (int(t) for t in counts.split())
    except ValueError:
        raise LabelParseError("expected '<classes> <models>'", no) from None

    classes: dict = {}
    seen_classes = 0
    pos = 2
    while pos < len(body):
        no, ln = body[pos]
        toks = ln.split()
        if len(toks) != 3 or not toks[2].lstrip("-").isdigit():
            raise LabelParseError(f"expected '<class> <parent> <count>', got {ln!r}", no)
        name, count = toks[0], int(toks[2])
        if count < 0:
            raise LabelParseError("negative model count", no)
        members = body[pos + 1:pos + 1 + count]
        if len(members) < count:
            raise LabelParseError(f"class {name!r} declares {count} models but the file ends", no)
        for mno, mid in members:
            if len(mid.split()) != 1:
                raise LabelParseError(f"expected one model id, got {mid!r}", mno)
            if mid in classes:
                raise LabelParseError(f"model {mid!r} listed twice", mno)
            classes[mid] = name
        seen_classes += 1
        pos += 1 + count
    if seen_classes != n_classes:
        raise LabelParseError(f"declared {n_classes} classes, found {seen_classes}")
    if len(classes) != n_models:
        raise LabelParseError(f"declared {n_models} models, found {len(classes)}")
    return Labeling(classes)


def _parse_csv_labels(body) -> Labeling:
    classes: dict = {}
    for no, ln in body:
        row = next(csv.reader([ln]))
        if len(row) != 2:
            raise LabelParseError(f"expected 'id,class', got {ln!r}", no)
        mid, cls = row[0].strip(), row[1].strip()
        if (mid, cls) == ("id", "class"):
            continue
        if mid in classes:
            raise LabelParseError(f"model {mid!r} listed twice", no)
        classes[mid] = cls
    if not classes:
        raise LabelParseError("no labels found")
    return Labeling(classes)


def load_labels(path) -> Labeling:
    return parse_cla(Path(path).read_text())


# ---------------------------------------------------------------------------
# ranking


def _id_rank(ids) -> np.ndarray:
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    rank = np.empty(len(ids), dtype=np.int64)
    rank[order] = np.arange(len(ids))
    return rank


def _ranked_indices(dm: DistanceMatrix, q: int, id_rank: np.ndarray) -> np.ndarray:
    """Indices sorted by distance to ``q`` (query excluded), ties by id."""
    order = np.lexsort((id_rank, dm.values[q]))
    return order[order != q]


def ranked_list(dm: DistanceMatrix, query: str) -> list[str]:
    q = dm.index(query)
    return [dm.ids[i] for i in _ranked_indices(dm, q, _id_rank(dm.ids))]


def _relevance(dm: DistanceMatrix, labels: Labeling):
    """Per evaluable query: (boolean relevance along its ranked list, class size)."""
    cls = np.array(labels.for_ids(dm.ids), dtype=object)
    id_rank = _id_rank(dm.ids)
    out = []
    for q in range(len(dm.ids)):
        size = int(np.count_nonzero(cls == cls[q]))
        if size < 2:
            log.warning("query %s is alone in class %s; skipped", dm.ids[q], cls[q])
            continue
        order = _ranked_indices(dm, q, id_rank)
        out.append((cls[order] == cls[q], size))
    if not out:
        raise ValueError("no query has a classmate; statistics are undefined")
    return out


def _nn_tiers(rel) -> tuple[float, float, float]:
    nn, t1, t2 = [], [], []
    for r, size in rel:
        c = size - 1
        nn.append(float(r[0]))
        t1.append(np.count_nonzero(r[:c]) / c)
        t2.append(np.count_nonzero(r[:2 * c]) / c)
    return float(np.mean(nn)), float(np.mean(t1)), float(np.mean(t2))


def _e_measure(rel) -> float:
    scores = []
    for r, size in rel:
        k = min(E_MEASURE_K, len(r))
        hits = np.count_nonzero(r[:k])
        if hits == 0:
            scores.append(0.0)
            continue
        p, rc = hits / k, hits / (size - 1)
        scores.append(2.0 / (1.0 / p + 1.0 / rc))
    return float(np.mean(scores))


def _dcg(rel) -> float:
    scores = []
    for r, size in rel:
        # the query itself occupies rank 1 with gain 1
        ranks = np.arange(2, len(r) + 2)
        num = 1.0 + float(np.sum(r / np.log2(ranks)))
        den = 1.0 + float(np.sum(1.0 / np.log2(np.arange(2, size + 1))))
        scores.append(num / den)
    return float(np.mean(scores))


def _pr_curve(rel) -> list[tuple[float, float]]:
    m1 = len(rel[0][0])
    prec = np.zeros(m1)
    rec = np.zeros(m1)
    k = np.arange(1, m1 + 1)
    for r, size in rel:
        hits = np.cumsum(r)
        prec += hits / k
        rec += hits / (size - 1)
    prec /= len(rel)
    rec /= len(rel)
    n_levels = max(size for _, size in rel) - 1
    curve = []
    for j in range(1, n_levels + 1):
        level = j / n_levels
        ok = rec >= level - RECALL_TOL
        curve.append((level, float(prec[ok].max()) if ok.any() else 0.0))
    return curve


def nn_tier_scores(dm: DistanceMatrix, labels: Labeling) -> tuple[float, float, float]:
    return _nn_tiers(_relevance(dm, labels))


def e_measure(dm: DistanceMatrix, labels: Labeling) -> float:
    """F-score of precision and recall over the top 32 results (fewer on small sets)."""
    return _e_measure(_relevance(dm, labels))


def dcg(dm: DistanceMatrix, labels: Labeling) -> float:
    """Normalized discounted cumulative gain with the query itself at rank 1."""
    return _dcg(_relevance(dm, labels))


def precision_recall(dm: DistanceMatrix, labels: Labeling) -> list[tuple[float, float]]:
    """Mean precision/recall over queries for every cutoff, reported as the
    interpolated precision at recall levels ``j / (|C| - 1)`` (largest class)."""
    return _pr_curve(_relevance(dm, labels))


@dataclass(frozen=True)
class RetrievalStats:
    nn: float
    tier1: float
    tier2: float
    e_measure: float
    dcg: float
    pr_curve: tuple

    def as_row(self) -> dict:
        return {"nn": self.nn, "tier1": self.tier1, "tier2": self.tier2,
                "e_measure": self.e_measure, "dcg": self.dcg}


def evaluate(dm: DistanceMatrix, labels: Labeling) -> RetrievalStats:
    rel = _relevance(dm, labels)
    nn, t1, t2 = _nn_tiers(rel)
    return RetrievalStats(nn, t1, t2, _e_measure(rel), _dcg(rel), tuple(_pr_curve(rel)))


STATS_COLUMNS = ("method", "parameters", "nn", "tier1", "tier2", "e_measure", "dcg")


def format_stats_csv(rows) -> str:
    """``rows`` are (method, parameters, RetrievalStats) triples."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for method, params, st in rows:
        w.writerow([method, params] + [f"{v:.6f}" for v in st.as_row().values()])
    return buf.getvalue()


def read_stats_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in STATS_COLUMNS[2:]:
            r[k] = float(r[k])
    return rows


def format_pr_csv(curve) -> str:
    lines = ["recall,precision"]
    lines += [f"{r:.6f},{p:.6f}" for r, p in curve]
    return "\n".join(lines) + "\n"


def read_pr_csv(path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        return [(float(r["recall"]), float(r["precision"])) for r in csv.DictReader(fh)]
