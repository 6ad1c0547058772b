import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from crrlab.model import softmax
from crrlab.objective import (EPS, LossConfig, batch_terms, cross_entropy_pair, crr_loss, crr_loss_gradient,
                              div_logit_grads, divergence)

from _oracles import central_difference, kl_terms, rel_error

KINDS = ["kl_forward", "kl_reverse", "js"]


def _total(lo, la, y, cfg):
    return crr_loss(softmax(lo), softmax(la), y, cfg).total


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(kind, seed):
    rng = np.random.default_rng(seed)
    lo, la = rng.normal(scale=2.0, size=3), rng.normal(scale=2.0, size=3)
    y = int(rng.integers(3))
    cfg = LossConfig(alpha=float(rng.uniform(0.5, 5)), divergence=kind)
    g_o, g_a = crr_loss_gradient(lo, la, y, cfg)
    n_o = central_difference(lambda: _total(lo, la, y, cfg), lo)
    n_a = central_difference(lambda: _total(lo, la, y, cfg), la)
    assert rel_error(g_o, n_o) < 1e-6
    assert rel_error(g_a, n_a) < 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_gradient_through_active_clamp(kind):
    # one class has probability far below eps, so clamping and renormalization are live
    lo = np.array([0.0, 1.0, -25.0])
    la = np.array([0.5, -0.3, 2.0])
    cfg = LossConfig(alpha=2.0, divergence=kind)
    assert softmax(lo)[2] < EPS
    g_o, g_a = crr_loss_gradient(lo, la, 1, cfg)
    assert rel_error(g_o, central_difference(lambda: _total(lo, la, 1, cfg), lo)) < 1e-6
    assert rel_error(g_a, central_difference(lambda: _total(lo, la, 1, cfg), la)) < 1e-6


def test_frozen_original_drops_divergence_gradient():
    lo, la = np.array([0.2, -0.1, 0.4]), np.array([1.0, 0.0, -1.0])
    frozen = crr_loss_gradient(lo, la, 0, LossConfig(alpha=3.0, freeze_original_in_div=True))
    plain = crr_loss_gradient(lo, la, 0, LossConfig(alpha=0.0))
    live = crr_loss_gradient(lo, la, 0, LossConfig(alpha=3.0))
    np.testing.assert_allclose(frozen[0], plain[0])
    np.testing.assert_allclose(frozen[1], live[1])


def test_alpha_zero_is_paired_cross_entropy():
    po, pa = np.array([0.2, 0.5, 0.3]), np.array([0.6, 0.1, 0.3])
    br = crr_loss(po, pa, 2, LossConfig(alpha=0.0))
    assert br.total == pytest.approx(-math.log(0.3) * 2, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_divergence_of_identical_is_zero(kind):
    rng = np.random.default_rng(0)
    for p in rng.dirichlet(np.ones(3), size=100):
        assert divergence(kind, p, p) == 0.0


def test_js_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(100):
        p, q = rng.dirichlet(np.ones(3), size=2)
        assert abs(divergence("js", p, q) - divergence("js", q, p)) < 1e-12


def test_kl_matches_per_term_sum():
    pairs = [((0.5, 0.5, 1e-12), (0.9, 0.1, 1e-12)), ((0.2, 0.3, 0.5), (0.5, 0.25, 0.25)),
             ((1 / 3, 1 / 3, 1 / 3), (0.7, 0.2, 0.1))]
    for p, q in pairs:
        pc = np.clip(p, EPS, 1 - EPS)
        qc = np.clip(q, EPS, 1 - EPS)
        pc, qc = pc / pc.sum(), qc / qc.sum()
        assert abs(divergence("kl_forward", p, q) - kl_terms(pc, qc)) < 1e-9
        assert abs(divergence("kl_reverse", p, q) - kl_terms(qc, pc)) < 1e-9


def test_known_kl_value():
    # KL((0.5, 0.5) || (0.9, 0.1)) computed by hand on a two-point support
    expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
    got = divergence("kl_forward", np.array([0.5, 0.5, 0.0]), np.array([0.9, 0.1, 0.0]))
    assert got == pytest.approx(expected, abs=1e-6)


def test_cross_entropy_clamps():
    ce_o, ce_a = cross_entropy_pair(np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), 0)
    assert ce_o == pytest.approx(-math.log(1 - EPS))
    assert ce_a == pytest.approx(-math.log(EPS))


def test_batch_terms_match_single_pairs():
    rng = np.random.default_rng(4)
    po, pa = rng.dirichlet(np.ones(3), size=6), rng.dirichlet(np.ones(3), size=6)
    y = rng.integers(0, 3, size=6)
    cfg = LossConfig(alpha=2.0, divergence="js")
    ce_o, ce_a, div = batch_terms(po, pa, y, cfg)
    for i in range(6):
        br = crr_loss(po[i], pa[i], int(y[i]), cfg)
        assert (ce_o[i], ce_a[i], div[i]) == pytest.approx((br.ce_orig, br.ce_aug, br.div), abs=1e-14)


def test_div_grads_vanish_at_equality():
    p = softmax(np.array([[0.3, -1.0, 2.0]]))
    for kind in KINDS:
        g_o, g_a = div_logit_grads(p, p, kind)
        assert np.abs(g_o).max() < 1e-12 and np.abs(g_a).max() < 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(alpha=-1)
    with pytest.raises(ValueError):
        LossConfig(divergence="hellinger")


dists = arrays(np.float64, 3, elements=st.floats(0, 1)).filter(lambda a: a.sum() > 1e-3).map(lambda a: a / a.sum())


@settings(max_examples=200, deadline=None)
@given(p=dists, q=dists, kind=st.sampled_from(KINDS))
def test_divergence_non_negative_and_finite(p, q, kind):
    v = divergence(kind, p, q)
    assert v >= 0 and math.isfinite(v)


@settings(max_examples=100, deadline=None)
@given(p=dists, q=dists)
def test_js_bounded_by_log2(p, q):
    assert divergence("js", p, q) <= math.log(2) + 1e-12
