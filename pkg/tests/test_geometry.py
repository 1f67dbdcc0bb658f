import numpy as np
import pytest
from scipy.spatial import ConvexHull, Delaunay

from set2graph import geometry as G
from set2graph.data import hull_is_closed_manifold
from set2graph.metrics import connected_components_to_cliques


def test_uniform_square_bounds_and_reproducible():
    a = G.sample_uniform_square(30, np.random.default_rng(3))
    b = G.sample_uniform_square(30, np.random.default_rng(3))
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1


def test_uniform_square_mean():
    # 5e4 points x 2 coordinates = 1e5 draws
    pts = G.sample_uniform_square(50_000, np.random.default_rng(0), check=False)
    assert abs(pts.mean() - 0.5) < 0.01


class TestIncircle:
    a, b, c = (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)

    def test_inside(self):
        assert G.incircle(self.a, self.b, self.c, (0.0, 0.0)) == 1

    def test_outside(self):
        assert G.incircle(self.a, self.b, self.c, (2.0, 0.0)) == -1

    def test_on_circle(self):
        assert G.incircle(self.a, self.b, self.c, (0.0, -1.0)) == 0

    def test_orientation_normalized(self):
        assert G.incircle(self.c, self.b, self.a, (0.0, 0.0)) == 1


def _edge_set(adj):
    i, j = np.nonzero(np.triu(adj, 1))
    return set(zip(i.tolist(), j.tolist()))


class TestDelaunay:
    def test_triangle(self):
        adj = G.delaunay_edges(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        assert _edge_set(adj) == {(0, 1), (0, 2), (1, 2)}

    def test_quad_diagonal(self):
        A, B, C, D = (0, 0), (1, 0), (0.9, 0.9), (0, 1)
        # hand check: C inside circle(ABD), D outside circle(ABC)
        assert G.incircle(A, B, D, C) == 1
        assert G.incircle(A, B, C, D) == -1
        adj = G.delaunay_edges(np.array([A, B, C, D], dtype=float))
        assert _edge_set(adj) == {(0, 1), (1, 2), (0, 2), (2, 3), (0, 3)}

    @pytest.mark.parametrize("seed", range(50))
    def test_euler_count_and_scipy_agree(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(4, 40))
        pts = G.sample_uniform_square(n, r)
        adj = G.delaunay_edges(pts)
        assert np.array_equal(adj, adj.T) and not adj.diagonal().any()
        h = G.hull_vertex_count_2d(pts)
        assert h == len(ConvexHull(pts).vertices)
        assert len(_edge_set(adj)) == 3 * n - 3 - h
        ref = set()
        for s in Delaunay(pts).simplices:
            for i in range(3):
                for j in range(i + 1, 3):
                    ref.add((min(s[i], s[j]), max(s[i], s[j])))
        assert _edge_set(adj) == ref

    @pytest.mark.parametrize("seed", range(20))
    def test_rigid_motion_invariance(self, seed):
        r = np.random.default_rng(100 + seed)
        pts = G.sample_uniform_square(15, r)
        th = r.uniform(0, 2 * np.pi)
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        moved = pts @ rot.T + r.normal(size=2)
        assert np.array_equal(G.delaunay_edges(pts), G.delaunay_edges(moved))

    def test_degenerate_square_raises(self):
        with pytest.raises(G.DegeneracyError):
            G.delaunay_edges(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


TETRA = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])


class TestHull:
    def test_tetrahedron(self):
        tris = G.convex_hull_triangles(TETRA)
        assert sorted(map(tuple, tris.tolist())) == [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]

    def test_interior_point_supports_nothing(self):
        pts = np.vstack([TETRA, [[0.1, 0.05, -0.02]]])
        tris = G.convex_hull_triangles(pts)
        assert sorted(map(tuple, tris.tolist())) == [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]

    def test_sphere_every_point_on_hull(self):
        pts = G.sample_sphere(30, np.random.default_rng(0))
        tris = G.convex_hull_triangles(pts)
        counts = np.bincount(tris.ravel(), minlength=30)
        assert counts.min() >= 3
        assert len(tris) == 2 * 30 - 4

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_scipy_and_closed(self, seed):
        r = np.random.default_rng(seed)
        pts = G.sample_gaussian3(int(r.integers(5, 25)), r)
        tris = G.convex_hull_triangles(pts)
        assert hull_is_closed_manifold(tris)
        ref = {tuple(sorted(s)) for s in ConvexHull(pts).simplices.tolist()}
        assert set(map(tuple, tris.tolist())) == ref

    def test_coplanar_raises(self):
        cube = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
        with pytest.raises(G.DegeneracyError):
            G.convex_hull_triangles(cube)

    def test_sphere_norms_and_gaussian_variance(self):
        pts = G.sample_sphere(200, np.random.default_rng(1), check=False)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
        g = G.sample_gaussian3(100_000 // 3 + 1, np.random.default_rng(2), check=False)
        assert abs(g.var() - 1.0) < 0.05

    def test_reproducible(self):
        assert np.array_equal(
            G.sample_gaussian3(10, np.random.default_rng(5)), G.sample_gaussian3(10, np.random.default_rng(5))
        )


class TestKnnCandidates:
    def test_complete_for_n4(self):
        cand = G.knn_triplet_candidates(TETRA, 3)
        assert cand.triplets.tolist() == [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]
        assert cand.labels.all() and cand.recall == 1.0

    def test_union_bound_and_sorted(self):
        pts = G.sample_sphere(30, np.random.default_rng(3))
        cand = G.knn_triplet_candidates(pts, 10)
        assert len(cand.triplets) <= 30 * 45
        assert np.all(np.diff(cand.triplets, axis=1) > 0)
        assert len(np.unique(cand.triplets, axis=0)) == len(cand.triplets)
        assert 0 < cand.recall <= 1

    def test_brute_force_candidates(self):
        pts = G.sample_gaussian3(12, np.random.default_rng(4))
        k = 4
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        expected = set()
        for q in range(12):
            order = sorted((j for j in range(12) if j != q), key=lambda j: (d[q, j], j))[:k]
            for a in range(k):
                for b in range(a + 1, k):
                    expected.add(tuple(sorted((q, order[a], order[b]))))
        cand = G.knn_triplet_candidates(pts, k)
        assert set(map(tuple, cand.triplets.tolist())) == expected

    def test_knn_ties_by_index(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0], [0, 2.0, 0], [0, 0, 3.0]])
        assert G.knn_indices(pts, 2)[0].tolist() == [1, 2]

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            G.knn_triplet_candidates(TETRA, 4)


class TestPartition:
    def test_single_cluster_full_adjacency(self):
        _, part = G.sample_partition_set((6, 6), (1, 1), 3, 0.1, np.random.default_rng(0))
        adj = G.partition_to_adjacency(part)
        assert adj.sum() == 6 * 5

    def test_singletons_zero_adjacency(self):
        _, part = G.sample_partition_set((5, 5), (5, 5), 3, 0.1, np.random.default_rng(0))
        assert part.num_clusters == 5
        assert not G.partition_to_adjacency(part).any()

    def test_reproducible(self):
        a = G.sample_partition_set((3, 9), (1, 3), 4, 0.2, np.random.default_rng(8))
        b = G.sample_partition_set((3, 9), (1, 3), 4, 0.2, np.random.default_rng(8))
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]

    def test_to_adjacency_small(self):
        adj = G.partition_to_adjacency(G.Partition([0, 0, 1]))
        assert _edge_set(adj) == {(0, 1)}

    @pytest.mark.parametrize("seed", range(20))
    def test_round_trip(self, seed):
        _, part = G.sample_partition_set((2, 15), (1, 6), 2, 0.3, np.random.default_rng(seed))
        recovered, closure = connected_components_to_cliques(G.partition_to_adjacency(part))
        assert recovered == part
        assert np.array_equal(closure, G.partition_to_adjacency(part))

    def test_canonical_labels(self):
        assert G.Partition([5, 5, 2, 7, 2]).labels.tolist() == [0, 0, 1, 2, 1]
