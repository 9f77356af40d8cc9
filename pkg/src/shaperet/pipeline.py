"""Cached, stage-by-stage retrieval pipeline."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (content_hash, file_digest, load_field, load_geometry, load_mesh, save_field,
                        save_geometry, save_mesh, write_atomic)
from .bow import (Dictionary, DistanceMatrix, Signature, build_signature, combine_histograms,
                  combine_vectors, distance_matrix, kmeans)
from .config import RunConfig
from .descriptors import DescriptorKind, ReductionModel, apply_reduction, describe_mesh, fit_reduction
from .evaluation import (Labeling, RetrievalStats, evaluate, format_pr_csv, format_stats_csv,
                         load_labels)
from .keypoints import detect, format_point_set, parse_point_set
from .mesh import TriMesh, estimate_geometry, parse_off

log = logging.getLogger(__name__)

STAGES = ("ingest", "geometry", "describe", "reduce", "keypoints", "dictionary", "signatures",
          "distmat", "evaluate")
# the stage that has to run first when a cached artifact is missing
PRODUCER = {"ingest": "ingest", "geometry": "describe", "describe": "describe", "reduce": "reduce",
            "keypoints": "keypoints", "dictionary": "dictionary", "signatures": "signatures",
            "distmat": "distmat"}


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str, mesh_id: str | None = None):
        self.stage = stage
        self.mesh_id = mesh_id
        where = f" [{mesh_id}]" if mesh_id else ""
        super().__init__(f"{stage}{where}: {message}")


class MissingArtifact(StageError):
    def __init__(self, stage: str, mesh_id: str | None = None):
        producer = PRODUCER.get(stage, stage)
        super().__init__(stage, f"no cached {stage} output; run `shaperet {producer}` first", mesh_id)


def derived_seed(master: int, mesh_id: str, stream: str = "a") -> int:
    """Per-mesh seed, independent of which other meshes are present."""
    digest = hashlib.sha256(f"{master}:{mesh_id}:{stream}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class StageRecord:
    hashes: list = field(default_factory=list)
    hits: int = 0
    misses: int = 0
    seconds: float = 0.0


@dataclass(frozen=True)
class RunResult:
    matrix: DistanceMatrix
    stats: RetrievalStats | None
    manifest: dict


class Pipeline:
    """Runs the stages for one :class:`RunConfig` against a content-addressed cache.

    ``only`` restricts which stages may compute missing artifacts; any other
    missing artifact raises :class:`MissingArtifact`. Single-stage
    subcommands use it to insist on their prerequisites. Geometry is an
    internal step and always allowed.
    """

    def __init__(self, config: RunConfig, only=None):
        self.cfg = config
        self.only = None if only is None else set(only) | {"geometry"}
        self.root = Path(config.cache)
        self.records = {s: StageRecord() for s in STAGES}
        self._memo: dict = {}

    # -- cache plumbing ----------------------------------------------------

    def _path(self, stage: str, key: str, suffix: str) -> Path:
        return self.root / stage / f"{key}{suffix}"

    def _cached(self, stage, key, suffix, build, compute, save, load, mesh_id=None):
        memo_key = (stage, key)
        if memo_key in self._memo:
            return self._memo[memo_key]
        rec = self.records[stage]
        path = self._path(stage, key, suffix)
        t0 = time.perf_counter()
        if path.exists():
            value = load(path)
            rec.hits += 1
        elif not build or (self.only is not None and stage not in self.only):
            raise MissingArtifact(stage, mesh_id)
        else:
            try:
                value = compute()
            except StageError:
                raise
            except Exception as exc:
                raise StageError(stage, str(exc), mesh_id) from exc
            save(value, path)
            rec.misses += 1
        rec.seconds += time.perf_counter() - t0
        if key not in rec.hashes:
            rec.hashes.append(key)
        self._memo[memo_key] = value
        return value

    # -- stages ------------------------------------------------------------

    def mesh_files(self) -> list[Path]:
        root = Path(self.cfg.dataset)
        files = sorted(root.glob("*.off"), key=lambda p: p.stem)
        if not files:
            raise StageError("ingest", f"no .off files in {root}")
        return files

    def meshes(self, build: bool = True) -> list[tuple[str, TriMesh]]:
        out = []
        for path in self.mesh_files():
            key = content_hash("ingest", path.stem, file_digest(path))
            mesh = self._cached("ingest", key, ".npz", build,
                                lambda p=path: parse_off(p.read_bytes(), p.stem),
                                save_mesh, load_mesh, path.stem)
            out.append((key, mesh))
        return out

    def geometry(self, mesh_key: str, mesh: TriMesh, build: bool = True):
        key = content_hash("geometry", mesh_key)
        return self._cached("geometry", key, ".npz", build, lambda: estimate_geometry(mesh),
                            save_geometry, load_geometry, mesh.id)

    def _field_key(self, mesh_key: str, kind: DescriptorKind) -> str:
        return content_hash("describe", mesh_key, kind.value, self.cfg.n_rings)

    def fields(self, kind, build: bool = True) -> dict:
        """mesh id -> (hash, DescriptorField) for one kind."""
        kind = DescriptorKind(kind)
        kinds = [DescriptorKind(k) for k in self.cfg.kinds]
        out = {}
        for mesh_key, mesh in self.meshes(build):
            missing = [k for k in kinds if not self._path("describe", self._field_key(mesh_key, k), ".dsc").exists()]
            computed = {}
            if missing and build and (self.only is None or "describe" in self.only):
                geo = self.geometry(mesh_key, mesh, build)
                t0 = time.perf_counter()
                try:
                    computed = describe_mesh(mesh, geo, missing, self.cfg.n_rings)
                except Exception as exc:
                    raise StageError("describe", str(exc), mesh.id) from exc
                self.records["describe"].seconds += time.perf_counter() - t0
            for k in kinds:
                key = self._field_key(mesh_key, k)
                f = self._cached("describe", key, ".dsc", build, lambda k=k: computed[k],
                                 save_field, load_field, mesh.id)
                if k == kind:
                    out[mesh.id] = (key, f)
        return out

    def reduction(self, kind, build: bool = True) -> tuple[str, ReductionModel]:
        kind = DescriptorKind(kind)
        fields = self.fields(kind, build)
        key = content_hash("reduce", kind.value, sorted(h for h, _ in fields.values()))
        model = self._cached("reduce", key, ".npz", build,
                             lambda: fit_reduction([f for _, f in fields.values()], kind),
                             lambda m, p: write_atomic(p, _model_bytes(m)), ReductionModel.load)
        return key, model

    def keypoints(self, stream: str = "a", build: bool = True) -> dict:
        """mesh id -> (hash, SamplePointSet)."""
        cfg = self.cfg
        out = {}
        for mesh_key, mesh in self.meshes(build):
            seed = derived_seed(cfg.seed, mesh.id, stream)
            if cfg.sampler == "random":
                key = content_hash("keypoints", mesh_key, "random", cfg.n_points, seed)
            else:
                key = content_hash("keypoints", mesh_key, cfg.sampler)

            def compute(mesh=mesh, mesh_key=mesh_key, seed=seed):
                geo = self.geometry(mesh_key, mesh) if cfg.sampler == "mesh-saliency" else None
                n = min(cfg.n_points, mesh.n_vertices)
                return detect(mesh, cfg.sampler, n, seed, geo)

            pts = self._cached("keypoints", key, ".txt", build, compute,
                               lambda s, p: write_atomic(p, format_point_set(s)),
                               lambda p: parse_point_set(Path(p).read_text()), mesh.id)
            out[mesh.id] = (key, pts)
        return out

    def _channels(self, build: bool):
        """Per dictionary: (hash parts, {mesh id: sample vectors})."""
        cfg = self.cfg
        kinds = [DescriptorKind(k) for k in cfg.kinds]
        mode = cfg.combination
        red = [self.reduction(k, build) for k in kinds]
        flds = [self.fields(k, build) for k in kinds]
        pts_a = self.keypoints("a", build)
        pts_b = self.keypoints("b", build) if mode in ("VD", "HistD") else pts_a

        def reduced(i, mesh_id, pts):
            return apply_reduction(red[i][1], flds[i][mesh_id][1].vectors[pts.indices])

        ids = sorted(pts_a)
        chans = []
        if mode in ("none", "HistS", "HistD"):
            for i in range(len(kinds)):
                src = pts_a if i == 0 else pts_b
                vecs = {m: reduced(i, m, src[m][1]) for m in ids}
                parts = [kinds[i].value, red[i][0], [src[m][0] for m in ids]]
                chans.append((parts, vecs))
        else:
            vecs = {}
            for m in ids:
                a, b = pts_a[m][1], pts_b[m][1]
                ra = apply_reduction(red[0][1], flds[0][m][1].vectors)
                rb = apply_reduction(red[1][1], flds[1][m][1].vectors)
                how = "same_points" if mode == "VS" else "different_points"
                try:
                    vecs[m] = combine_vectors(ra, rb, how, a.indices, b.indices)
                except ValueError as exc:
                    raise StageError("dictionary", str(exc), m) from exc
            parts = [mode, red[0][0], red[1][0], [pts_a[m][0] for m in ids], [pts_b[m][0] for m in ids]]
            chans.append((parts, vecs))
        return chans

    def dictionaries(self, build: bool = True) -> list[tuple[str, Dictionary, dict]]:
        cfg = self.cfg
        out = []
        for c, (parts, vecs) in enumerate(self._channels(build)):
            key = content_hash("dictionary", parts, cfg.dictionary_size, cfg.seed, cfg.max_iter, c)
            label = "+".join(cfg.kinds) if cfg.combination in ("VS", "VD") else cfg.kinds[c]

            def compute(vecs=vecs, c=c, label=label):
                population = np.vstack([vecs[m] for m in sorted(vecs)])
                return kmeans(population, cfg.dictionary_size, cfg.seed + c, cfg.max_iter, cfg.workers, label)

            d = self._cached("dictionary", key, ".dict", build, compute,
                             lambda d, p: write_atomic(p, d.to_bytes()), Dictionary.load)
            out.append((key, d, vecs))
        return out

    def signatures(self, build: bool = True) -> tuple[str, list[Signature]]:
        dicts = self.dictionaries(build)
        key = content_hash("signatures", [k for k, _, _ in dicts])

        def compute():
            sigs = []
            for m in sorted(dicts[0][2]):
                parts = []
                for _, d, vecs in dicts:
                    if len(vecs[m]) == 0:
                        raise StageError("signatures", "no sample points", m)
                    parts.append(build_signature(vecs[m], d, m))
                sig = parts[0]
                for extra in parts[1:]:
                    sig = combine_histograms(sig, extra)
                sigs.append(sig)
            return sigs

        sigs = self._cached("signatures", key, ".npz", build, compute,
                            lambda s, p: write_atomic(p, _signature_bytes(s)), _load_signatures)
        return key, sigs

    def distmat(self, build: bool = True) -> tuple[str, DistanceMatrix]:
        sig_key, sigs = self.signatures(build)
        key = content_hash("distmat", sig_key)
        dm = self._cached("distmat", key, ".bin", build, lambda: distance_matrix(sigs),
                          lambda m, p: write_atomic(p, m.to_bytes()), DistanceMatrix.load)
        return key, dm

    def labels(self) -> Labeling | None:
        path = self.cfg.label_path
        return load_labels(path) if path is not None else None

    def evaluate(self, build: bool = True) -> RunResult:
        """Evaluate the matrix and write every output file into ``cfg.out``."""
        from .plotting import plot_pr_curves

        _, dm = self.distmat(build)
        out = Path(self.cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        dm.save(out / "distmat.csv")
        labels = self.labels()
        stats = None
        t0 = time.perf_counter()
        if labels is not None:
            try:
                stats = evaluate(dm, labels)
            except (KeyError, ValueError) as exc:
                raise StageError("evaluate", str(exc)) from exc
            write_atomic(out / "stats.csv", format_stats_csv([(self.method_name(), self.parameter_string(), stats)]))
            write_atomic(out / "pr.csv", format_pr_csv(stats.pr_curve))
            plot_pr_curves({self.method_name(): stats.pr_curve}, out / "pr.svg")
        else:
            log.warning("no labels found; skipping evaluation")
        self.records["evaluate"].seconds += time.perf_counter() - t0
        manifest = self.manifest()
        write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return RunResult(dm, stats, manifest)

    def run(self) -> RunResult:
        return self.evaluate(build=True)

    # -- reporting ---------------------------------------------------------

    def method_name(self) -> str:
        cfg = self.cfg
        if cfg.combination == "none":
            return cfg.kinds[0]
        return f"{'+'.join(cfg.kinds)}/{cfg.combination}"

    def parameter_string(self) -> str:
        cfg = self.cfg
        parts = [f"sampler={cfg.sampler}"]
        if cfg.sampler == "random":
            parts.append(f"n={cfg.n_points}")
        parts += [f"D={cfg.dictionary_size}", f"seed={cfg.seed}"]
        return ";".join(parts)

    def manifest(self) -> dict:
        return {
            "version": __version__,
            "config": self.cfg.snapshot(),
            "stages": {s: {"hashes": r.hashes, "hits": r.hits, "misses": r.misses,
                           "seconds": round(r.seconds, 4)}
                       for s, r in self.records.items()},
        }


def _model_bytes(model: ReductionModel) -> bytes:
    buf = io.BytesIO()
    model.save(buf)
    return buf.getvalue()


def _signature_bytes(sigs: list[Signature]) -> bytes:
    buf = io.BytesIO()
    np.savez(buf, ids=np.array([s.mesh_id for s in sigs]), histograms=np.vstack([s.histogram for s in sigs]),
             n_samples=np.array([s.n_samples for s in sigs]))
    return buf.getvalue()


def _load_signatures(path) -> list[Signature]:
    with np.load(path) as z:
        return [Signature(str(i), h.copy(), int(n)) for i, h, n in zip(z["ids"], z["histograms"], z["n_samples"])]


def run_pipeline(config: RunConfig) -> RunResult:
    return Pipeline(config.validate()).run()
