import subprocess
import sys

import numpy as np
import pytest

from set2graph import tensor as T
from set2graph.layers import DeepSetsLayer, Linear, Permutation
from set2graph.models import (
    DegenerateSetError,
    ModelConfig,
    build_model,
    load_checkpoint,
    mlp_baseline_forward,
    parameter_count,
    s2g_forward,
    s2g_k3_forward,
    save_checkpoint,
    siam_forward,
)
from set2graph.tensor import Tensor

# regression constants, counted after construction with the desk defaults and d_in=2
DESK_S2G_PARAMS = 23381
DESK_SIAM_PARAMS = 22641


def model(variant="s2g", seed=0, **kw):
    return build_model(ModelConfig(variant=variant, seed=seed, **kw))


def small(variant, seed=0, **kw):
    kw.setdefault("phi_widths", [8, 8])
    kw.setdefault("d1", 4)
    kw.setdefault("psi_widths", [8, 1])
    kw.setdefault("inner_widths", [6, 6])
    return model(variant, seed, **kw)


class TestParameterCount:
    def test_affine(self):
        lin = Linear(3, 5, np.random.default_rng(0))
        assert sum(p.data.size for p in lin.parameters()) == 20

    def test_deepsets_layer(self):
        layer = DeepSetsLayer(3, 5, np.random.default_rng(0), pooling="mean")
        assert sum(p.data.size for p in layer.parameters()) == 35

    def test_desk_constants(self):
        assert parameter_count(model("s2g")) == DESK_S2G_PARAMS
        assert parameter_count(model("siam", phi_widths=[96, 96, 96])) == DESK_SIAM_PARAMS

    def test_desk_s2g_siam_matched(self):
        ratio = DESK_SIAM_PARAMS / DESK_S2G_PARAMS
        assert 0.9 <= ratio <= 1.1


@pytest.mark.parametrize("variant", ["s2g", "s2g_plus", "siam"])
def test_edge_models_equivariant(variant):
    r = np.random.default_rng(1)
    m = small(variant, pooling="attention")
    for _ in range(50):
        n = int(r.integers(2, 9))
        x = r.normal(size=(n, 2))
        sigma = Permutation.random(n, r)
        lhs = s2g_forward(sigma.act_on_set(x), m).edge_logits
        rhs = sigma.act_on_edges(s2g_forward(x, m).edge_logits)
        assert np.max(np.abs(lhs - rhs)) < 1e-8


@pytest.mark.parametrize("variant", ["s2g", "s2g_plus", "siam"])
def test_constant_rows_collapse(variant):
    m = small(variant, seed=3)
    x = np.tile([[0.3, -1.2]], (6, 1))
    z = s2g_forward(x, m).edge_logits
    off = z[~np.eye(6, dtype=bool)]
    assert np.ptp(off) < 1e-10


def test_siam_pair_independent_of_rest():
    m = small("siam", seed=4)
    r = np.random.default_rng(5)
    a = r.normal(size=(5, 2))
    b = a.copy()
    b[2:] = r.normal(size=(3, 2))
    assert s2g_forward(a, m).edge_logits[0, 1] == siam_forward(b, m).edge_logits[0, 1]


def test_s2g_pair_depends_on_rest():
    m = small("s2g", seed=4)
    r = np.random.default_rng(5)
    a = r.normal(size=(5, 2))
    b = a.copy()
    b[2:] = r.normal(size=(3, 2))
    assert s2g_forward(a, m).edge_logits[0, 1] != s2g_forward(b, m).edge_logits[0, 1]


def test_degenerate_set():
    with pytest.raises(DegenerateSetError):
        s2g_forward(np.zeros((1, 2)), small("s2g"))


def test_batched_matches_single():
    m = small("s2g_plus", seed=6)
    x = np.random.default_rng(7).normal(size=(3, 5, 2))
    with T.no_grad():
        batched = m.edge_logits(Tensor(x)).data
    for b in range(3):
        np.testing.assert_allclose(batched[b], s2g_forward(x[b], m).edge_logits, atol=1e-13)


class TestK3:
    def setup_method(self):
        self.m = small("s2g_k3", d_in=3, seed=8)
        self.x = np.random.default_rng(9).normal(size=(7, 3))
        self.cand = np.array([[0, 1, 2], [1, 3, 5], [2, 4, 6], [0, 5, 6]])

    def test_within_triplet_order(self):
        base = s2g_k3_forward(self.x, self.cand, self.m).triplet_logits
        shuffled = self.cand[:, [2, 0, 1]]
        other = s2g_k3_forward(self.x, shuffled, self.m).triplet_logits
        assert np.max(np.abs(base - other)) < 1e-12

    def test_equivariance(self):
        r = np.random.default_rng(10)
        base = s2g_k3_forward(self.x, self.cand, self.m).triplet_logits
        for _ in range(20):
            sigma = Permutation.random(7, r)
            out = s2g_k3_forward(sigma.act_on_set(self.x), sigma.relabel(self.cand), self.m).triplet_logits
            assert np.max(np.abs(out - base)) < 1e-8

    def test_empty(self):
        out = s2g_k3_forward(self.x, np.zeros((0, 3), dtype=int), self.m)
        assert out.triplet_logits.shape == (0,)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            s2g_k3_forward(self.x, np.array([[0, 1, 7]]), self.m)


class TestMlpBaseline:
    def test_full_size(self):
        m = small("mlp_baseline", max_n=6)
        assert mlp_baseline_forward(np.ones((6, 2)), m).edge_logits.shape == (6, 6)

    def test_cropped(self):
        m = small("mlp_baseline", max_n=6)
        assert mlp_baseline_forward(np.ones((4, 2)), m).edge_logits.shape == (4, 4)

    def test_too_large(self):
        with pytest.raises(ValueError):
            mlp_baseline_forward(np.ones((7, 2)), small("mlp_baseline", max_n=6))

    def test_padding_gradient(self):
        m = small("mlp_baseline", max_n=6)
        x = Tensor(np.random.default_rng(0).normal(size=(4, 2)))
        w = m.psi.layers[-1].weight

        def f(t):
            m.psi.layers[-1].weight = t
            return T.total(T.tanh(m.edge_logits(x)))

        assert T.finite_difference_check(f, w) < 1e-4


class TestDeterminism:
    def test_same_seed_same_params(self):
        a, b = model("s2g", seed=11), model("s2g", seed=11)
        for p, q in zip(a.parameters(), b.parameters()):
            assert np.array_equal(p.data, q.data)

    def test_across_processes(self):
        code = (
            "import numpy as np, sys;"
            "from set2graph.models import ModelConfig, build_model, s2g_forward;"
            "m = build_model(ModelConfig(seed=5));"
            "x = np.random.default_rng(1).uniform(size=(9, 2));"
            "sys.stdout.write(s2g_forward(x, m).edge_logits.tobytes().hex())"
        )
        outs = [subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout for _ in range(2)]
        assert outs[0] == outs[1] and outs[0]


@pytest.mark.parametrize("variant", ["s2g", "s2g_plus", "siam", "s2g_k3", "mlp_baseline"])
def test_checkpoint_round_trip(tmp_path, variant):
    kw = {"d_in": 3} if variant == "s2g_k3" else {}
    m = small(variant, seed=12, max_n=8, **kw)
    path = tmp_path / "model.ckpt"
    save_checkpoint(m, path)
    loaded = load_checkpoint(path)
    assert loaded.config == m.config
    for p, q in zip(m.parameters(), loaded.parameters()):
        assert p.data.tobytes() == q.data.tobytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_checkpoint(path)
