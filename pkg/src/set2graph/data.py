"""Dataset samples, seeded generation and JSON-lines persistence."""

from __future__ import annotations

import gzip
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import geometry as G

TASKS = ("delaunay", "hull_spherical", "hull_gaussian", "partition")
GENERATOR_VERSION = 1
MAX_TRIES = 100


class DatasetError(ValueError):
    pass


@dataclass
class DataConfig:
    train_size: int = 5000
    val_size: int = 500
    test_size: int = 500
    n_range: list[int] = field(default_factory=lambda: [20, 20])
    knn_k: int = 10
    # partition task only
    cluster_range: list[int] = field(default_factory=lambda: [1, 4])
    d_in: int = 10
    spread: float = 0.3

    def sizes(self) -> dict[str, int]:
        return {"train": self.train_size, "val": self.val_size, "test": self.test_size}


@dataclass
class Sample:
    task: str
    seed: int
    points: np.ndarray
    adjacency: Optional[np.ndarray] = None
    clusters: Optional[np.ndarray] = None
    triangles: Optional[np.ndarray] = None
    triplets: Optional[np.ndarray] = None
    triplet_labels: Optional[np.ndarray] = None
    knn_k: Optional[int] = None
    recall: Optional[float] = None

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def is_k3(self) -> bool:
        return self.task.startswith("hull")

    # -- serialization -------------------------------------------------
    def to_record(self) -> dict:
        if self.task == "delaunay":
            i, j = np.nonzero(np.triu(self.adjacency, 1))
            labels = {"edges": [[int(a), int(b)] for a, b in zip(i, j)]}
        elif self.task == "partition":
            labels = {"clusters": self.clusters.tolist()}
        else:
            labels = {
                "triangles": self.triangles.tolist(),
                "knn_k": self.knn_k,
                "candidates": self.triplets.tolist(),
                "candidate_labels": self.triplet_labels.astype(int).tolist(),
                "recall": self.recall,
            }
        return {
            "n": self.n,
            "points": self.points.tolist(),
            "labels": labels,
            "task": self.task,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Sample":
        try:
            task = rec["task"]
            points = np.asarray(rec["points"], dtype=np.float64)
            labels = rec["labels"]
            n = int(rec["n"])
            s = cls(task=task, seed=int(rec["seed"]), points=points)
            if len(points) != n:
                raise DatasetError(f"n={n} but {len(points)} points")
            if task == "delaunay":
                adj = np.zeros((n, n), dtype=bool)
                for a, b in labels["edges"]:
                    adj[a, b] = adj[b, a] = True
                s.adjacency = adj
            elif task == "partition":
                s.clusters = np.asarray(labels["clusters"], dtype=np.int64)
                s.adjacency = G.partition_to_adjacency(G.Partition(s.clusters))
            elif task in TASKS:
                s.triangles = np.asarray(labels["triangles"], dtype=np.intp).reshape(-1, 3)
                s.knn_k = int(labels["knn_k"])
                s.triplets = np.asarray(labels["candidates"], dtype=np.intp).reshape(-1, 3)
                s.triplet_labels = np.asarray(labels["candidate_labels"], dtype=bool)
                s.recall = float(labels["recall"])
            else:
                raise DatasetError(f"unknown task {task!r}")
        except (KeyError, TypeError, IndexError) as exc:
            raise DatasetError(f"malformed record: {exc!r}") from exc
        return s


def derive_seed(base_seed: int, split: str, index: int) -> int:
    digest = hashlib.sha256(f"{base_seed}:{split}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def generate_sample(task: str, cfg: DataConfig, seed: int) -> Sample:
    rng = np.random.default_rng(seed)
    lo, hi = cfg.n_range
    if task == "partition":
        pts, part = G.sample_partition_set(
            (lo, hi), tuple(cfg.cluster_range), cfg.d_in, cfg.spread, rng
        )
        return Sample(task, seed, pts, adjacency=G.partition_to_adjacency(part), clusters=part.labels)
    n = int(rng.integers(lo, hi + 1))
    if task == "delaunay":
        # the oracle itself detects degeneracy, so resample on its error
        for _ in range(MAX_TRIES):
            pts = G.sample_uniform_square(n, rng, check=False)
            try:
                return Sample(task, seed, pts, adjacency=G.delaunay_edges(pts))
            except G.DegeneracyError:
                continue
        raise G.DegeneracyError(f"no general-position sample after {MAX_TRIES} tries")
    if task in ("hull_spherical", "hull_gaussian"):
        sampler = G.sample_sphere if task == "hull_spherical" else G.sample_gaussian3
        for _ in range(MAX_TRIES):
            pts = sampler(n, rng, check=False)
            try:
                tris = G.convex_hull_triangles(pts)
                break
            except G.DegeneracyError:
                continue
        else:
            raise G.DegeneracyError(f"no general-position sample after {MAX_TRIES} tries")
        cand = G.knn_triplet_candidates(pts, cfg.knn_k, hull=tris)
        return Sample(
            task,
            seed,
            pts,
            triangles=tris,
            triplets=cand.triplets,
            triplet_labels=cand.labels,
            knn_k=cfg.knn_k,
            recall=cand.recall,
        )
    raise DatasetError(f"unknown task {task!r}")


def _generate_chunk(args) -> list[Sample]:
    task, cfg, seeds = args
    return [generate_sample(task, cfg, s) for s in seeds]


def generate_split(task: str, cfg: DataConfig, base_seed: int, split: str, size: int, workers: int = 1) -> list[Sample]:
    seeds = [derive_seed(base_seed, split, i) for i in range(size)]
    if workers <= 1 or size < 64:
        return [generate_sample(task, cfg, s) for s in seeds]
    step = max(1, size // (workers * 4))
    chunks = [(task, cfg, seeds[i : i + step]) for i in range(0, size, step)]
    out: list[Sample] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_generate_chunk, chunks):
            out.extend(part)
    return out


# ---------------------------------------------------------------------------
# validation


def validate_sample(s: Sample) -> None:
    """Re-check the geometric invariants of a loaded sample; raises DatasetError."""
    n = s.n
    if not np.all(np.isfinite(s.points)):
        raise DatasetError("non-finite coordinates")
    if s.task in ("delaunay", "partition"):
        adj = s.adjacency
        if adj.shape != (n, n) or not np.array_equal(adj, adj.T) or adj.diagonal().any():
            raise DatasetError("adjacency must be square, symmetric, zero-diagonal")
    if s.task == "delaunay":
        h = G.hull_vertex_count_2d(s.points)
        edges = int(np.triu(s.adjacency, 1).sum())
        if edges != 3 * n - 3 - h:
            raise DatasetError(f"Delaunay edge count {edges} != 3n-3-h = {3 * n - 3 - h}")
    elif s.task == "partition":
        if not np.array_equal(G.canonical_labels(s.clusters), s.clusters):
            raise DatasetError("cluster ids are not contiguous from 0")
    elif s.is_k3:
        tri = s.triangles
        if tri.size and (tri.min() < 0 or tri.max() >= n):
            raise DatasetError("triangle index out of range")
        if not hull_is_closed_manifold(tri):
            raise DatasetError("hull triangles do not form a closed 2-manifold")
        cand = s.triplets
        if cand.size:
            if cand.min() < 0 or cand.max() >= n:
                raise DatasetError("candidate index out of range")
            if not (np.all(cand[:, 0] < cand[:, 1]) and np.all(cand[:, 1] < cand[:, 2])):
                raise DatasetError("candidates must be sorted triples")
            if len(np.unique(cand, axis=0)) != len(cand):
                raise DatasetError("duplicate candidates")
        hull_set = {tuple(t) for t in tri.tolist()}
        expect = np.array([tuple(t) in hull_set for t in cand.tolist()], dtype=bool)
        if not np.array_equal(expect, s.triplet_labels):
            raise DatasetError("candidate labels disagree with hull triangles")


def hull_is_closed_manifold(triangles: np.ndarray) -> bool:
    """Every edge of every triangle is shared by exactly two triangles."""
    counts: dict[tuple[int, int], int] = {}
    for a, b, c in np.asarray(triangles).tolist():
        for e in ((a, b), (a, c), (b, c)):
            e = (min(e), max(e))
            counts[e] = counts.get(e, 0) + 1
    return bool(counts) and all(v == 2 for v in counts.values())


# ---------------------------------------------------------------------------
# files


def _open(path: Path, mode: str):
    return gzip.open(path, mode + "t") if path.suffix == ".gz" else open(path, mode)


def write_jsonl(path, samples: Iterable[Sample]) -> None:
    path = Path(path)
    with _open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(), separators=(",", ":")))
            fh.write("\n")


def read_jsonl(path, validate: bool = True) -> list[Sample]:
    path = Path(path)
    out = []
    with _open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                s = Sample.from_record(json.loads(line))
                if validate:
                    validate_sample(s)
            except (DatasetError, json.JSONDecodeError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
            out.append(s)
    return out
