from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crrlab._util import LABEL_INDEX
from crrlab.causal_sim import (CausalSpec, Intervention, TaskFamily, adversarial_shift, all_interventions,
                               append_spurious, generate, intervene, invariance_gap, mutual_information,
                               pushforward_tv, random_transfer_trials, spurious_label_pairs, total_variation,
                               verify_transfer)
from crrlab.model import ModelParams, Vocab
from crrlab.text import tokenize

SPEC = CausalSpec()


@pytest.fixture(scope="module")
def corpus():
    return generate(SPEC, 400, seed=3, split="test")


def _match_rate(c):
    g, y = spurious_label_pairs(c)
    return float(np.mean(np.array(g) == np.array(y)))


def test_rho_one_is_deterministic():
    c = generate(SPEC, 500, seed=1, rho=1.0)
    for x in c.dataset:
        assert set(c.annotations[x.id].spurious_groups) == {LABEL_INDEX[x.polarity]}


def test_rho_zero_is_independent():
    c = generate(SPEC, 10_000, seed=2, rho=0.0)
    assert mutual_information(*spurious_label_pairs(c)) < 0.01


@pytest.mark.parametrize("rho", [0.5, 0.8, 0.95])
def test_rho_recovered_within_two_points(rho):
    # P(group == label) = rho + (1 - rho) / 3, so rho_hat = (rate - 1/3) / (2/3)
    rate = _match_rate(generate(SPEC, 10_000, seed=4, rho=rho))
    assert abs((rate - 1 / 3) / (2 / 3) - rho) < 0.02


def test_generation_is_seeded():
    a, b = generate(SPEC, 50, seed=9), generate(SPEC, 50, seed=9)
    assert a.dataset == b.dataset and a.annotations == b.annotations
    assert generate(SPEC, 50, seed=10).dataset != a.dataset


def test_every_sentence_has_a_label_core_token(corpus):
    for x in corpus.dataset:
        ann = corpus.annotations[x.id]
        core = [ann.tokens[i] for i in ann.core_pos]
        assert any(t in SPEC.core[x.polarity] for t in core)
        assert ann.tokens[ann.aspect_pos] == x.aspect_term
        assert tokenize(x.text) == list(ann.tokens)
        assert len(ann.spurious_pos) == SPEC.spurious_tokens


def test_roles_mark_every_spurious_token(corpus):
    ann = next(iter(corpus.annotations.values()))
    roles = ann.roles()
    assert roles[ann.aspect_pos] == "aspect"
    assert sum(r.startswith("spurious") for r in roles) == SPEC.spurious_tokens


def test_intervene_keeps_labels_and_core(corpus):
    iv = Intervention(1, "corner")
    moved = intervene(corpus, iv, SPEC)
    for x, y in zip(corpus.dataset, moved.dataset):
        a, b = corpus.annotations[x.id], moved.annotations[y.id]
        assert x.polarity == y.polarity
        assert [a.tokens[i] for i in a.core_pos] == [b.tokens[i] for i in b.core_pos]
        assert all(b.tokens[i] == "corner" for i in b.spurious_pos)
        assert len(a.tokens) == len(b.tokens)


def test_intervene_idempotent_and_constant(corpus):
    iv = Intervention(2, "candle")
    once = intervene(corpus, iv, SPEC)
    twice = intervene(once, iv, SPEC)
    assert once.dataset.instances == twice.dataset.instances
    assert mutual_information(*spurious_label_pairs(once)) == 0.0


def test_intervene_errors(corpus):
    with pytest.raises(KeyError):
        intervene(corpus, Intervention(7, "corner"), SPEC)
    with pytest.raises(ValueError):
        intervene(corpus, Intervention(0, "corner"), SPEC)


def test_adversarial_shift_uses_other_groups(corpus):
    shifted = adversarial_shift(corpus, SPEC, seed=0)
    for x in shifted.dataset:
        groups = set(shifted.annotations[x.id].spurious_groups)
        assert len(groups) == 1 and LABEL_INDEX[x.polarity] not in groups


def test_append_spurious_pairs(corpus):
    pairs = append_spurious(corpus, SPEC, seed=0)
    fronts = 0
    for x, a in pairs.pairs:
        y = a.instance
        assert y.polarity == x.polarity
        assert y.text[slice(*y.aspect_span)] == x.aspect_term
        added = Counter(tokenize(y.text)) - Counter(tokenize(x.text))
        groups = {SPEC.group_of(t) for t in added if t not in (",", "and")}
        assert len(groups) == 1 and LABEL_INDEX[x.polarity] not in groups
        fronts += a.position == "front"
    assert 0.4 < fronts / len(pairs) < 0.6


def test_spec_validation():
    with pytest.raises(ValueError):
        CausalSpec(spurious_groups=(("a", "b"), ("b", "c"), ("d",)))
    with pytest.raises(ValueError):
        CausalSpec(core={"positive": ("crispy",), "negative": ("x",), "neutral": ("y",)})
    with pytest.raises(ValueError):
        CausalSpec(rho=1.5)
    with pytest.raises(ValueError):
        CausalSpec.from_dict({"colour": "red"})


def test_spec_dict_roundtrip():
    assert CausalSpec.from_dict(SPEC.to_dict()) == SPEC


def test_constant_model_has_zero_gap(corpus):
    vocab = Vocab.build(corpus.dataset.instances)
    p = ModelParams.init(len(vocab), 4, 4, rng=None)
    p.b2[:] = [0.3, -0.2, 1.0]
    gap = invariance_gap(p, vocab, corpus, all_interventions(SPEC), SPEC)
    assert gap.mean == 0.0 and gap.max == 0.0 and gap.flip_rate == 0.0
    assert gap.n_pairs == len(corpus) * 12


def test_empty_intervention_list_gap_is_zero_and_flagged(corpus):
    vocab = Vocab.build(corpus.dataset.instances)
    p = ModelParams.init(len(vocab), 4, 4, np.random.default_rng(0))
    gap = invariance_gap(p, vocab, corpus, [], SPEC)
    assert gap.mean == 0.0 and gap.notes


def test_random_model_gap_properties(corpus):
    vocab = Vocab.build(corpus.dataset.instances)
    p = ModelParams.init(len(vocab), 6, 6, np.random.default_rng(1), scale=1.0)
    gap = invariance_gap(p, vocab, corpus, all_interventions(SPEC)[:4], SPEC)
    assert gap.mean > 0 and gap.max >= gap.mean and 0 <= gap.flip_rate <= 1


def test_task_family_rejects_non_surjective():
    with pytest.raises(ValueError):
        TaskFamily({"broken": (0, 2, 2)})
    with pytest.raises(ValueError):
        TaskFamily({"short": (0, 1)})


def test_identity_relabeling_preserves_tv_exactly():
    rng = np.random.default_rng(0)
    p, q = rng.dirichlet(np.ones(3), size=(2, 500))
    ref, img = pushforward_tv(p, q, TaskFamily().matrix("polarity"))
    np.testing.assert_array_equal(ref, img)


def test_random_trials_have_no_violations():
    assert random_transfer_trials(10_000, seed=5) == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1e-6, 1.0), min_size=3, max_size=3), st.lists(st.floats(1e-6, 1.0), min_size=3,
                                                                           max_size=3),
       st.sampled_from(["negative_vs_rest", "positive_vs_rest", "polar_vs_neutral"]))
def test_pushforward_never_increases_tv(a, b, task):
    p, q = np.array(a) / sum(a), np.array(b) / sum(b)
    ref, img = pushforward_tv(p, q, TaskFamily().matrix(task))
    assert img <= ref + 1e-12


def test_verify_transfer_on_random_model(corpus):
    vocab = Vocab.build(corpus.dataset.instances)
    p = ModelParams.init(len(vocab), 6, 6, np.random.default_rng(2), scale=1.0)
    rep = verify_transfer(p, vocab, corpus, all_interventions(SPEC)[:3], SPEC)
    assert rep.ok and rep.n_pairs == 3 * len(corpus)
    assert set(rep.tasks) == set(TaskFamily().tasks)
    assert rep.tasks["polarity"]["mean_tv"] == pytest.approx(rep.reference_mean_tv)


def test_total_variation_basics():
    assert total_variation(np.array([1.0, 0, 0]), np.array([0, 1.0, 0])) == 1.0
