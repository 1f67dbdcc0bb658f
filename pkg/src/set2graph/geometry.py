"""Ground-truth oracles and samplers for the three synthetic tasks.

The Delaunay and hull oracles are brute force over all triples (vectorized
over the remaining points), which is exact on the general-position inputs the
samplers produce and cheap at the set sizes used here (n <= 100).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

DEGENERACY_TOL = 1e-12
# triples per vectorized block; bounds memory at ~_BLOCK * n floats
_BLOCK = 4096


class DegeneracyError(ValueError):
    """Input is not in general position for the requested predicate."""


@dataclass
class Partition:
    labels: np.ndarray

    def __post_init__(self):
        self.labels = canonical_labels(self.labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def num_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.n else 0

    def clusters(self) -> list[list[int]]:
        return [np.flatnonzero(self.labels == c).tolist() for c in range(self.num_clusters)]

    def __eq__(self, other) -> bool:
        return isinstance(other, Partition) and np.array_equal(self.labels, other.labels)


def canonical_labels(labels) -> np.ndarray:
    """Relabel cluster ids contiguously from 0 in order of first appearance."""
    labels = np.asarray(labels)
    out = np.empty(len(labels), dtype=np.int64)
    seen: dict = {}
    for i, lab in enumerate(labels.tolist()):
        out[i] = seen.setdefault(lab, len(seen))
    return out


# ---------------------------------------------------------------------------
# samplers


def sample_uniform_square(n: int, rng: np.random.Generator, check: bool = True, max_tries: int = 100) -> np.ndarray:
    """``n`` i.i.d. points in the unit square, resampled until in general position.

    ``check=False`` skips the (quartic) general-position test.
    """
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    for _ in range(max_tries):
        pts = rng.uniform(0.0, 1.0, size=(n, 2))
        if not check or is_general_position_2d(pts):
            return pts
    raise DegeneracyError(f"no general-position sample after {max_tries} tries")


def sample_gaussian3(n: int, rng: np.random.Generator, check: bool = True, max_tries: int = 100) -> np.ndarray:
    if n < 4:
        raise ValueError(f"need n >= 4, got {n}")
    for _ in range(max_tries):
        pts = rng.standard_normal((n, 3))
        if not check or is_general_position_3d(pts):
            return pts
    raise DegeneracyError(f"no general-position sample after {max_tries} tries")


def sample_sphere(n: int, rng: np.random.Generator, check: bool = True, max_tries: int = 100) -> np.ndarray:
    if n < 4:
        raise ValueError(f"need n >= 4, got {n}")
    for _ in range(max_tries):
        pts = rng.standard_normal((n, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        if not check or is_general_position_3d(pts):
            return pts
    raise DegeneracyError(f"no general-position sample after {max_tries} tries")


def sample_partition_set(
    n_range: tuple[int, int],
    cluster_count_range: tuple[int, int],
    d_in: int,
    spread: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, Partition]:
    """Gaussian blobs: every cluster gets at least one element."""
    lo, hi = n_range
    clo, chi = cluster_count_range
    if lo > hi or clo > chi or lo < 1 or clo < 1:
        raise ValueError(f"empty range: n_range={n_range}, cluster_count_range={cluster_count_range}")
    n = int(rng.integers(lo, hi + 1))
    k = min(int(rng.integers(clo, chi + 1)), n)
    centers = rng.standard_normal((k, d_in))
    assign = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    assign = assign[rng.permutation(n)]
    points = centers[assign] + spread * rng.standard_normal((n, d_in))
    return points, Partition(assign)


def partition_to_adjacency(part: Partition) -> np.ndarray:
    lab = part.labels
    adj = lab[:, None] == lab[None, :]
    np.fill_diagonal(adj, False)
    return adj


# ---------------------------------------------------------------------------
# 2D predicates and Delaunay


def orient2d(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _incircle_det(a, b, c, d) -> np.ndarray:
    """Lifted 3x3 determinant relative to ``d``; positive when ``d`` is inside
    the circumcircle of counterclockwise ``(a, b, c)``. Broadcasts over leading axes."""
    ad = a - d
    bd = b - d
    cd = c - d
    alift = (ad**2).sum(-1)
    blift = (bd**2).sum(-1)
    clift = (cd**2).sum(-1)
    return (
        alift * (bd[..., 0] * cd[..., 1] - cd[..., 0] * bd[..., 1])
        - blift * (ad[..., 0] * cd[..., 1] - cd[..., 0] * ad[..., 1])
        + clift * (ad[..., 0] * bd[..., 1] - bd[..., 0] * ad[..., 1])
    )


def incircle(a, b, c, d) -> int:
    """+1 if ``d`` is strictly inside circle(a, b, c), -1 outside, 0 on it or degenerate."""
    a, b, c, d = (np.asarray(p, dtype=np.float64) for p in (a, b, c, d))
    o = orient2d(a, b, c)
    if abs(o) < DEGENERACY_TOL:
        return 0
    det = float(_incircle_det(a, b, c, d)) * (1.0 if o > 0 else -1.0)
    if abs(det) < DEGENERACY_TOL:
        return 0
    return 1 if det > 0 else -1


def _triples(n: int) -> np.ndarray:
    return np.array(list(combinations(range(n), 3)), dtype=np.intp).reshape(-1, 3)


def is_general_position_2d(points: np.ndarray) -> bool:
    try:
        delaunay_triangles(points)
    except DegeneracyError:
        return False
    return True


def delaunay_triangles(points: np.ndarray) -> np.ndarray:
    """Triples whose circumcircle is empty of other points (brute force)."""
    p = np.asarray(points, dtype=np.float64)
    tri = _triples(len(p))
    keep = [_delaunay_block(p, tri[i : i + _BLOCK]) for i in range(0, len(tri), _BLOCK)]
    return tri[np.concatenate(keep)] if keep else tri


def _delaunay_block(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    n = len(p)
    a, b, c = p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]]
    o = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    if np.any(np.abs(o) < DEGENERACY_TOL):
        raise DegeneracyError("collinear triple")
    sign = np.sign(o)[:, None]
    det = _incircle_det(a[:, None, :], b[:, None, :], c[:, None, :], p[None, :, :]) * sign
    own = np.zeros((len(tri), n), dtype=bool)
    own[np.arange(len(tri))[:, None], tri] = True
    if np.any((np.abs(det) < DEGENERACY_TOL) & ~own):
        raise DegeneracyError("four cocircular points")
    return ((det < 0) | own).all(axis=1)


def delaunay_edges(points: np.ndarray) -> np.ndarray:
    """Symmetric boolean adjacency of the Delaunay triangulation, zero diagonal."""
    n = len(points)
    adj = np.zeros((n, n), dtype=bool)
    for i, j, l in delaunay_triangles(points):
        adj[i, j] = adj[j, i] = adj[i, l] = adj[l, i] = adj[j, l] = adj[l, j] = True
    return adj


def hull_vertex_count_2d(points: np.ndarray) -> int:
    """Vertices of the planar convex hull (monotone chain, strict turns only)."""
    pts = sorted(map(tuple, np.asarray(points, dtype=np.float64)))
    if len(pts) < 3:
        return len(pts)

    def half(seq):
        chain = []
        for q in seq:
            while len(chain) >= 2 and orient2d(chain[-2], chain[-1], q) <= 0:
                chain.pop()
            chain.append(q)
        return chain

    lower, upper = half(pts), half(reversed(pts))
    return len(lower) + len(upper) - 2


# ---------------------------------------------------------------------------
# 3D hull


def orient3d(a, b, c, d) -> np.ndarray:
    """Signed volume (times 6) of tetrahedron (a, b, c, d); broadcasts."""
    ad, bd, cd = a - d, b - d, c - d
    return (
        ad[..., 0] * (bd[..., 1] * cd[..., 2] - bd[..., 2] * cd[..., 1])
        - ad[..., 1] * (bd[..., 0] * cd[..., 2] - bd[..., 2] * cd[..., 0])
        + ad[..., 2] * (bd[..., 0] * cd[..., 1] - bd[..., 1] * cd[..., 0])
    )


def is_general_position_3d(points: np.ndarray) -> bool:
    try:
        convex_hull_triangles(points)
    except DegeneracyError:
        return False
    return True


def convex_hull_triangles(points: np.ndarray) -> np.ndarray:
    """Sorted triples ``i<j<l`` with all other points strictly on one side of their plane."""
    p = np.asarray(points, dtype=np.float64)
    if len(p) < 4:
        raise DegeneracyError(f"need at least 4 points, got {len(p)}")
    tri = _triples(len(p))
    keep = [_hull_block(p, tri[i : i + _BLOCK]) for i in range(0, len(tri), _BLOCK)]
    return tri[np.concatenate(keep)]


def _hull_block(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    n = len(p)
    a, b, c = p[tri[:, 0]][:, None], p[tri[:, 1]][:, None], p[tri[:, 2]][:, None]
    vol = orient3d(a, b, c, p[None, :, :])
    own = np.zeros((len(tri), n), dtype=bool)
    own[np.arange(len(tri))[:, None], tri] = True
    pos = ((vol > DEGENERACY_TOL) & ~own).any(axis=1)
    neg = ((vol < -DEGENERACY_TOL) & ~own).any(axis=1)
    flat = ((np.abs(vol) <= DEGENERACY_TOL) & ~own).any(axis=1)
    supporting = ~(pos & neg)
    if np.any(supporting & flat):
        raise DegeneracyError("coplanar points on a hull face")
    return supporting


def knn_indices(points: np.ndarray, k: int) -> np.ndarray:
    """``(n, k)`` nearest neighbours of each point, ties broken by ascending index."""
    p = np.asarray(points, dtype=np.float64)
    n = len(p)
    if k >= n:
        raise ValueError(f"K={k} must be smaller than n={n}")
    d2 = ((p[:, None, :] - p[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


@dataclass
class TripletCandidates:
    triplets: np.ndarray
    labels: np.ndarray
    # fraction of true hull triangles that made it into the candidate set
    recall: float


def knn_triplet_candidates(points: np.ndarray, k: int, hull: np.ndarray | None = None) -> TripletCandidates:
    nbrs = knn_indices(points, k)
    n = len(nbrs)
    pairs = np.array(list(combinations(range(k), 2)), dtype=np.intp)
    q = np.repeat(np.arange(n), len(pairs))
    a = nbrs[:, pairs[:, 0]].ravel()
    b = nbrs[:, pairs[:, 1]].ravel()
    trip = np.sort(np.stack([q, a, b], axis=1), axis=1)
    trip = np.unique(trip, axis=0)
    if hull is None:
        hull = convex_hull_triangles(points)
    hull_set = {tuple(t) for t in np.asarray(hull).tolist()}
    labels = np.array([tuple(t) in hull_set for t in trip.tolist()], dtype=bool)
    recall = float(labels.sum() / len(hull_set)) if hull_set else 1.0
    return TripletCandidates(trip, labels, recall)
