import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crrlab._util import substream
from crrlab.corpus import make_instance
from crrlab.model import (ModelParams, Vocab, backward, backward_batch, forward, forward_batch, load_checkpoint,
                          make_batch, predict, predict_proba, save_checkpoint)

from _oracles import central_difference, rel_error, scalar_forward

V, D, HID = 12, 5, 4


def _params(seed, scale=0.5):
    return ModelParams.init(V, D, HID, np.random.default_rng(seed), scale)


def _draw(rng):
    n = int(rng.integers(2, 7))
    ids = [int(t) for t in rng.integers(1, V, size=n)]
    lo = int(rng.integers(0, n))
    hi = int(rng.integers(lo + 1, n + 1))
    return ids, (lo, hi)


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    p = _params(seed)
    ids, rng_ = _draw(rng)
    probs, cache = forward(p, ids, rng_)
    ref, ref_logits = scalar_forward(p, ids, rng_)
    np.testing.assert_allclose(probs, ref, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(cache.logits[0], ref_logits, rtol=1e-12, atol=1e-14)


def test_batched_forward_equals_single_instances():
    rng = np.random.default_rng(9)
    p = _params(9)
    items = [_draw(rng) for _ in range(6)]
    batched = forward_batch(p, make_batch(items)).probs
    singles = np.stack([forward(p, ids, r)[0] for ids, r in items])
    np.testing.assert_allclose(batched, singles, rtol=1e-12, atol=1e-15)


def test_dropout_mask_matches_oracle():
    rng = np.random.default_rng(3)
    p = _params(3)
    ids, r = _draw(rng)
    cache = forward_batch(p, make_batch([(ids, r)]), 0.5, substream(1, "dropout"))
    ref, _ = scalar_forward(p, ids, r, drop=cache.drop[0])
    np.testing.assert_allclose(cache.probs[0], ref, rtol=1e-12)
    assert set(np.unique(cache.drop)) <= {0.0, 2.0}


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("dropout", [0.0, 0.3])
def test_backward_matches_finite_differences(seed, dropout):
    rng = np.random.default_rng(100 + seed)
    p = _params(100 + seed)
    items = [_draw(rng) for _ in range(3)]
    batch = make_batch(items)
    w = rng.normal(size=(3, 3))

    def run():
        dr = substream(seed, "dropout") if dropout else None
        return forward_batch(p, batch, dropout, dr)

    grads, _ = backward_batch(run(), p, w)
    f = lambda: float((run().logits * w).sum())  # noqa: E731
    for name, value in p.items():
        num = central_difference(f, value)
        assert rel_error(getattr(grads, name), num) < 1e-4, name


@pytest.mark.parametrize("seed", range(5))
def test_hidden_state_gradient_matches_embedding_perturbation(seed):
    # each token id occurs once, so perturbing its embedding row perturbs exactly one hidden state
    rng = np.random.default_rng(seed)
    p = _params(seed)
    n = 5
    ids = [int(t) for t in rng.permutation(np.arange(1, V))[:n]]
    r = (1, 3)
    w = rng.normal(size=3)
    probs, cache = forward(p, ids, r)
    _, dH = backward(cache, p, w)
    assert dH.shape == (n, D)
    f = lambda: float(forward(p, ids, r)[1].logits[0] @ w)  # noqa: E731
    num = central_difference(f, p.E)
    for pos, tok in enumerate(ids):
        assert rel_error(dH[pos], num[tok]) < 1e-4


def test_repeated_tokens_accumulate_embedding_gradient():
    p = _params(4)
    ids, r = [3, 3, 5, 3], (2, 3)
    _, cache = forward(p, ids, r)
    grads, dH = backward(cache, p, np.array([1.0, -1.0, 0.5]))
    np.testing.assert_allclose(grads.E[3], dH[0] + dH[1] + dH[3], rtol=1e-12)
    assert np.all(grads.E[0] == 0)


def test_zero_params_give_uniform_distribution():
    p = ModelParams.init(V, D, HID, rng=None)
    probs, _ = forward(p, [1, 2, 3], (0, 1))
    np.testing.assert_allclose(probs, np.full(3, 1 / 3))


def test_padding_does_not_change_predictions():
    p = _params(8)
    short = ([4, 5], (0, 1))
    long = ([1, 2, 3, 4, 5, 6], (2, 3))
    alone = forward_batch(p, make_batch([short])).probs
    padded = forward_batch(p, make_batch([short, long])).probs[0]
    np.testing.assert_allclose(alone[0], padded, rtol=1e-13)


def test_nonfinite_params_rejected():
    p = _params(1)
    p.W1[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        forward(p, [1, 2], (0, 1))


def test_bad_aspect_range():
    with pytest.raises(ValueError):
        make_batch([([1, 2], (1, 1))])


def test_vocab_first_seen_order_and_unk():
    x = make_instance("a", "Tasty fries , tasty!", "fries", polarity="positive")
    v = Vocab.build([x])
    assert v.itos[:5] == ["<pad>", "<unk>", "tasty", "fries", ","]
    assert v.encode(["fries", "never"]) == [3, 1]


def test_checkpoint_roundtrip(tmp_path):
    p = _params(5)
    x = make_instance("a", "Tasty fries .", "fries", polarity="positive")
    v = Vocab.build([x])
    p = ModelParams.init(len(v), D, HID, np.random.default_rng(0))
    save_checkpoint(tmp_path / "c.json", p, v, {"note": 1})
    q, v2, meta = load_checkpoint(tmp_path / "c.json")
    assert v2 == v and meta == {"note": 1}
    for name, value in p.items():
        np.testing.assert_array_equal(getattr(q, name), value)
    assert predict(q, v2, x) == predict(p, v, x)
    np.testing.assert_array_equal(predict_proba(q, v2, [x]), predict_proba(p, v, [x]))


def test_checkpoint_bad_format(tmp_path):
    (tmp_path / "c.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "c.json")


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_probabilities_are_distributions(seed):
    rng = np.random.default_rng(seed)
    p = _params(seed, scale=2.0)
    ids, r = _draw(rng)
    probs, _ = forward(p, ids, r)
    assert np.all(probs >= 0) and abs(probs.sum() - 1) < 1e-12
