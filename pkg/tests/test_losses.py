import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_inlier, random_probs
from emlnet import autodiff as ad
from emlnet.autodiff import Tensor, grad, grad_check
from emlnet.functional import binary_entropy
from emlnet.losses import (
    LossWeights,
    hardest_negative,
    loss_all,
    loss_cc,
    loss_cls,
    loss_cmm,
    loss_nil,
    loss_oem_uniform,
    loss_oem_weighted,
    loss_ova,
    mixup_feature,
)
from emlnet.memory import MemoryBank
from emlnet.model import ModelParams, init_params, open_probs

LN2 = math.log(2)


def val(t):
    return float(t.data)


class TestCls:
    def test_one_hot_is_zero(self):
        assert val(loss_cls([0.0, 1.0, 0.0], 1)) == pytest.approx(0.0, abs=1e-11)

    def test_uniform(self):
        assert val(loss_cls(np.full(4, 0.25), 2)) == pytest.approx(1.3862943611198906, abs=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            loss_cls([0.5, 0.5], 2)

    def test_batch_shape(self, rng):
        out = loss_cls(random_probs(rng, 6, 3), [0, 1, 2, 0, 1, 2])
        assert out.shape == (6,)


class TestOva:
    def test_perfect_separation(self):
        assert val(loss_ova([1.0, 0.0, 0.0], 0)) < 1e-9

    def test_all_half(self):
        assert val(loss_ova([0.5, 0.5, 0.5], 0)) == pytest.approx(1.3862943611198906, abs=1e-12)

    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            loss_ova([0.7], 0)

    def test_hardest_negative_matches_bruteforce(self, rng):
        P = random_inlier(rng, 100, 5)
        y = rng.integers(0, 5, size=100)
        hard = hardest_negative(P, y)
        for i in range(100):
            best = max((k for k in range(5) if k != y[i]), key=lambda k: P[i, k])
            assert hard[i] == best
            expected = -math.log(P[i, y[i]]) - min(math.log(1 - P[i, k]) for k in range(5) if k != y[i])
            assert val(loss_ova(P[i], y[i])) == pytest.approx(expected, abs=1e-12)


class TestOem:
    def test_uniform_at_half(self):
        assert val(loss_oem_uniform(np.full(4, 0.5))) == pytest.approx(LN2, abs=1e-12)

    def test_uniform_zero_entropy(self):
        assert val(loss_oem_uniform([0.0, 1.0, 1.0, 0.0])) < 1e-9

    def test_uniform_permutation_invariant(self, rng):
        p = random_inlier(rng, 1, 6)[0]
        assert val(loss_oem_uniform(p)) == pytest.approx(val(loss_oem_uniform(p[::-1])), abs=1e-15)

    def test_weighted_one_hot_focus(self, rng):
        p_o = random_inlier(rng, 1, 5)[0]
        p_c = np.eye(5)[3]
        assert val(loss_oem_weighted(p_o, p_c)) == pytest.approx(binary_entropy(p_o[3]) / 5, abs=1e-12)

    def test_weighted_uniform_pc_collapse(self, rng):
        p_o = random_inlier(rng, 10, 4)
        w = loss_oem_weighted(p_o, np.full((10, 4), 0.25)).data
        u = loss_oem_uniform(p_o).data
        np.testing.assert_allclose(w, u / 4, atol=1e-12)

    def test_weighted_all_half(self, rng):
        p_c = random_probs(rng, 8, 5)
        np.testing.assert_allclose(loss_oem_weighted(np.full((8, 5), 0.5), p_c).data, LN2 / 5, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            loss_oem_weighted([0.5, 0.5], [1.0, 0.0, 0.0])

    def test_focusing_monotone(self, rng):
        """Moving mass onto k* moves the loss monotonically towards H(p_o(k*))/K."""
        p_o = random_inlier(rng, 1, 5)[0]
        base = random_probs(rng, 1, 5)[0]
        target = binary_entropy(p_o[2]) / 5
        gaps = []
        for t in np.linspace(0, 1, 51):
            p_c = (1 - t) * base + t * np.eye(5)[2]
            gaps.append(abs(val(loss_oem_weighted(p_o, p_c)) - target))
        assert all(a >= b - 1e-15 for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-12

    def test_gradient_sparsity_with_detached_one_hot(self, rng):
        p_o = Tensor.param(random_inlier(rng, 1, 5)[0])
        p_c = Tensor.param(np.eye(5)[1])
        g_o, g_c = grad(loss_oem_weighted(p_o, p_c, detach_weights=True), [p_o, p_c])
        assert np.all(g_o[[0, 2, 3, 4]] == 0.0)
        assert g_o[1] != 0.0
        assert np.all(g_c == 0.0)

    def test_gradient_flows_through_pc_by_default(self, rng):
        p_o = Tensor.param(random_inlier(rng, 1, 4)[0])
        p_c = Tensor.param(random_probs(rng, 1, 4)[0])
        g_c = grad(loss_oem_weighted(p_o, p_c), [p_c])[0]
        np.testing.assert_allclose(g_c, binary_entropy(p_o.data) / 4, atol=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1))
    def test_weighted_upper_bound(self, k, seed):
        r = np.random.default_rng(seed)
        p_o = r.uniform(0, 1, k)
        p_c = r.dirichlet(np.ones(k))
        assert val(loss_oem_weighted(p_o, p_c)) <= binary_entropy(p_o).max() / k + 1e-12


class TestNil:
    def test_zero_weights(self):
        assert val(loss_nil([0.2, 0.8], [0.0, 0.0])) == 0.0

    def test_single_neighbor(self):
        assert val(loss_nil([0.5], [1.0])) == pytest.approx(LN2, abs=1e-12)

    def test_empty_neighborhood_raises(self):
        with pytest.raises(ValueError):
            loss_nil(np.empty((1, 0)), np.empty((1, 0)))

    def test_monotone_in_probability(self, rng):
        w = np.array([0.6, 0.3, 1.0])
        p = np.array([0.2, 0.5, 0.3])
        before = val(loss_nil(p, w))
        for k in range(3):
            q = p.copy()
            q[k] *= 0.5
            q /= q.sum()
            # shrinking p_k raises the others; the net effect must still increase the loss
            # whenever p_k carries the dominant weight share
            if w[k] / w.sum() > p[k]:
                assert val(loss_nil(q, w)) > before


class TestMixup:
    def test_endpoints(self, rng):
        zs, zt = rng.normal(size=3), rng.normal(size=3)
        np.testing.assert_array_equal(mixup_feature(zs, zt, 1.0), zs)
        np.testing.assert_array_equal(mixup_feature(zs, zt, 0.0), zt)

    def test_midpoint(self):
        np.testing.assert_allclose(mixup_feature([2.0, 0.0], [0.0, 2.0], 0.5), [1.0, 1.0])

    def test_lambda_out_of_range(self):
        with pytest.raises(ValueError):
            mixup_feature([1.0], [0.0], 1.5)

    def test_per_row_lambda(self, rng):
        zs, zt = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        lam = np.array([0.1, 0.5, 0.9])
        np.testing.assert_allclose(mixup_feature(zs, zt, lam), lam[:, None] * zs + (1 - lam[:, None]) * zt)

    def test_beta_statistics(self):
        draws = np.random.default_rng(0).beta(2.0, 2.0, size=100_000)
        assert abs(draws.mean() - 0.5) < 0.01


class TestCmm:
    def test_already_rejected(self):
        assert val(loss_cmm([0.0, 0.3], 0)) < 1e-11

    def test_half(self):
        assert val(loss_cmm([0.5, 0.9], 0)) == pytest.approx(LN2, abs=1e-12)


class TestCc:
    def test_zero_inlier(self, rng):
        assert val(loss_cc(random_probs(rng, 1, 4)[0], np.zeros(4))) == 0.0

    def test_one_hot_agreement(self):
        assert val(loss_cc(np.eye(4)[2], [0.1, 0.2, 1.0, 0.3])) == pytest.approx(-0.25, abs=1e-15)

    def test_alignment_lowers_loss(self, rng):
        for _ in range(50):
            p_c = np.sort(random_probs(rng, 1, 5)[0])
            p_o = np.sort(rng.uniform(0, 1, 5))
            aligned = val(loss_cc(p_c, p_o))
            anti = val(loss_cc(p_c, p_o[::-1]))
            assert aligned <= anti
            assert -1 / 5 - 1e-15 <= aligned <= 0.0


# -- gradients ---------------------------------------------------------------

def _instances(n, seed=7):
    r = np.random.default_rng(seed)
    for _ in range(n):
        k = int(r.integers(2, 6))
        b = int(r.integers(1, 7))
        yield r, k, b


@pytest.mark.parametrize("name", ["cls", "ova", "oem_uniform", "oem_weighted", "oem_weighted_detached", "cmm", "cc"])
def test_loss_gradients_random(name):
    for r, k, b in _instances(20):
        y = r.integers(0, k, size=b)
        lc = r.normal(size=(b, k))
        lo = r.normal(size=(b, 2 * k))
        inlier = lambda t: ad.softmax(t.reshape(b, k, 2), axis=-1)[:, :, 1]
        f = {
            "cls": lambda a, o: loss_cls(ad.softmax(a), y).sum(),
            "ova": lambda a, o: loss_ova(inlier(o), y).sum(),
            "oem_uniform": lambda a, o: loss_oem_uniform(inlier(o)).sum(),
            "oem_weighted": lambda a, o: loss_oem_weighted(inlier(o), ad.softmax(a)).sum(),
            # detached weights are constants, so the oracle must see them as constants too
            "oem_weighted_detached": lambda a, o: loss_oem_weighted(inlier(o), ad.softmax(lc).data, True).sum(),
            "cmm": lambda a, o: loss_cmm(inlier(o), y).sum(),
            "cc": lambda a, o: loss_cc(ad.softmax(a), inlier(o)).sum(),
        }[name]
        assert grad_check(f, [lc, lo], eps=1e-5) < 1e-4


def test_nil_gradient_random():
    for r, k, b in _instances(20, seed=11):
        w = r.uniform(0, 1, size=(b, k))
        f = lambda a: loss_nil(ad.softmax(a), w).sum()
        assert grad_check(f, [r.normal(size=(b, k))], eps=1e-5) < 1e-4


def test_cmm_gradient_through_mixup(rng):
    params = init_params(4, (5,), 6, 3, seed=3)
    lam = rng.beta(2, 2, size=4)
    y = np.array([0, 1, 2, 1])

    def f(zs, zt):
        return loss_cmm(open_probs(params, mixup_feature(zs, zt, lam)), y).sum()

    assert grad_check(f, [rng.normal(size=(4, 6)), rng.normal(size=(4, 6))]) < 1e-4


# -- full objective ----------------------------------------------------------

def _setup(seed=0, d=4, K=3, b=4, n_t=12):
    r = np.random.default_rng(seed)
    params = init_params(d, (6,), 5, K, seed=seed)
    x_s, y_s = r.normal(size=(b, d)), r.integers(0, K, size=b)
    x_t = r.normal(size=(n_t, d))
    bank = MemoryBank(n_t, 5, k_nn=3, tau=0.5)
    from emlnet.model import forward
    bank.update(np.arange(n_t), forward(params, x_t).z.data)
    rows = np.arange(b)
    return params, x_s, y_s, x_t[:b], rows, bank


def test_loss_all_zero_weights_is_source_only():
    params, x_s, y_s, x_t, rows, bank = _setup()
    rep = loss_all(params, x_s, y_s, x_t, rows, bank, LossWeights.source_only(), "weighted")
    assert rep.total == rep.cls + rep.ova


@pytest.mark.parametrize("mode", ["uniform", "weighted"])
def test_loss_all_total_bookkeeping(mode):
    params, x_s, y_s, x_t, rows, bank = _setup(seed=2)
    w = LossWeights()
    rep = loss_all(params, x_s, y_s, x_t, rows, bank, w, mode, np.random.default_rng(0))
    assert abs(rep.recompute_total(w) - rep.total) <= 1e-9
    assert all(np.isfinite(getattr(rep, f)) for f in rep.FIELDS)
    assert rep.nil > 0


def test_loss_all_rejects_bad_mode():
    params, x_s, y_s, x_t, rows, bank = _setup()
    with pytest.raises(ValueError):
        loss_all(params, x_s, y_s, x_t, rows, bank, LossWeights(), "entropy")


def test_loss_all_skips_nil_on_empty_bank():
    params, x_s, y_s, x_t, rows, _ = _setup()
    bank = MemoryBank(12, 5)
    rep = loss_all(params, x_s, y_s, x_t, rows, bank, LossWeights(), update_bank=False)
    assert rep.nil == 0.0


@pytest.mark.parametrize("mode", ["uniform", "weighted"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_loss_all_gradient(mode, seed):
    params, x_s, y_s, x_t, rows, bank = _setup(seed=seed)
    w = LossWeights(beta1=0.5, beta2=0.1, eta=0.16, gamma=0.1)

    def f(*leaves):
        return loss_all(ModelParams.from_leaves(leaves), x_s, y_s, x_t, rows, bank, w, mode,
                        np.random.default_rng(5), update_bank=False).graph

    assert grad_check(f, params.leaves(), eps=1e-5) < 1e-4


def test_nil_batch_ignores_zero_features():
    from emlnet.autodiff import Tensor
    from emlnet.losses import nil_batch
    bank = MemoryBank(4, 2, k_nn=2, tau=0.5)
    bank.update(np.arange(4), [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.2]])
    z = Tensor.param(np.array([[0.0, 0.0], [0.0, 2.0]]))
    out = nil_batch(z, np.array([0, 1]), bank)
    assert np.isfinite(out.item())
    g = grad(out, [z])[0]
    assert np.all(g[0] == 0) and np.all(np.isfinite(g))
