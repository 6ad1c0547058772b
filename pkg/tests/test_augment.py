import pytest
from hypothesis import given, settings, strategies as st

from crrlab._util import substream
from crrlab.aspect_bank import AspectBank, OpinionPhrase, build_bank
from crrlab.augment import (AugmentConfig, PairedDataset, add_diff_mix, augment_dataset, counterfactual_dataset,
                            identity, rev_tgt)
from crrlab.corpus import Dataset, make_instance

from _contracts import augmentation_violations


@pytest.fixture(scope="module")
def bank(train_set, lexicon):
    return build_bank(train_set, lexicon)


def test_rear_form(bank):
    x = make_instance("x", "The coffee was excellent .", "coffee", polarity="positive")
    cfg = AugmentConfig(position_policy="rear_only")
    a = add_diff_mix(x, bank, cfg, substream(0, "augment", "x"))
    assert a.kind == "AddDiff" and a.position == "rear"
    assert a.instance.text.startswith("The coffee was excellent, but ")
    assert a.instance.text.endswith(" .")
    assert a.instance.aspect_span == x.aspect_span


def test_front_form(bank):
    x = make_instance("x", "The coffee was excellent .", "coffee", polarity="positive")
    cfg = AugmentConfig(front_probability=1.0)
    a = add_diff_mix(x, bank, cfg, substream(0, "augment", "x"))
    assert a.position == "front"
    assert a.instance.text.startswith("Although ") and a.instance.text.endswith(", The coffee was excellent .")
    assert a.instance.text[slice(*a.instance.aspect_span)] == "coffee"


def test_identity_fallback_when_pool_empty():
    bank = AspectBank([OpinionPhrase("good soup", "soup", "positive", "s")])
    x = make_instance("x", "The soup was great .", "soup", polarity="negative")
    a = add_diff_mix(x, bank, AugmentConfig(), substream(0, "augment", "x"))
    assert a.is_identity and a.instance == x
    assert PairedDataset([(x, a)]).counts["identity"] == 1


def test_contract_on_fixture_corpus(train_set, bank):
    for seed in range(10):
        pairs = augment_dataset(train_set, bank, AugmentConfig(seed=seed))
        for x, a in pairs.pairs:
            assert augmentation_violations(x, a, bank) == [], (x.id, a.instance.text)


def test_rear_only_has_no_front(train_set, bank):
    pairs = augment_dataset(train_set, bank, AugmentConfig(position_policy="rear_only", seed=4))
    assert pairs.counts["front"] == 0
    assert pairs.counts["rear"] + pairs.counts["identity"] == len(train_set)


def test_augment_is_deterministic_per_id(train_set, bank):
    a = augment_dataset(train_set, bank, AugmentConfig(seed=2))
    sub = Dataset("s", "train", train_set.instances[5:9])
    b = augment_dataset(sub, bank, AugmentConfig(seed=2))
    assert a.pairs[5:9] == b.pairs


def test_paired_roundtrip(tmp_path, train_set, bank):
    pairs = augment_dataset(train_set, bank, AugmentConfig(seed=1))
    pairs.save(tmp_path / "p.jsonl")
    again = PairedDataset.load(tmp_path / "p.jsonl")
    assert again.pairs == pairs.pairs
    assert again.counts == pairs.counts


def test_paired_dataset_rejects_mismatch():
    x = make_instance("x", "The soup was great .", "soup", polarity="positive")
    z = make_instance("z", "The soup was great .", "soup", polarity="positive")
    with pytest.raises(ValueError):
        PairedDataset([(x, identity(z))])


def test_config_bounds():
    with pytest.raises(ValueError):
        AugmentConfig(min_phrases=0)
    with pytest.raises(ValueError):
        AugmentConfig(max_phrases=4)
    with pytest.raises(ValueError):
        AugmentConfig(position_policy="middle")


@pytest.mark.parametrize("text,term,pol,expected,new_pol", [
    ("The soup was cold .", "soup", "negative", "The soup was not cold .", "positive"),
    ("The speakers are not bad .", "speakers", "positive", "The speakers are bad .", "negative"),
    ("Great pasta here .", "pasta", "positive", "not Great pasta here .", "negative"),
])
def test_rev_tgt(lexicon, text, term, pol, expected, new_pol):
    x = make_instance("x", text, term, polarity=pol)
    a = rev_tgt(x, lexicon)
    assert a.kind == "RevTgt"
    assert a.instance.text == expected
    assert a.instance.polarity == new_pol
    assert a.instance.text[slice(*a.instance.aspect_span)] == term


def test_rev_tgt_neutral_and_miss_are_identity(lexicon):
    assert rev_tgt(make_instance("n", "The menu is standard .", "menu", polarity="neutral"), lexicon).is_identity
    assert rev_tgt(make_instance("m", "We ate the soup .", "soup", polarity="positive"), lexicon).is_identity


def test_counterfactual_dataset(train_set, lexicon):
    pairs = counterfactual_dataset(train_set, lexicon)
    for x, a in pairs.pairs:
        if not a.is_identity:
            assert a.instance.polarity != x.polarity


_words = st.sampled_from(["the", "food", "was", "really", "ok", "and", "we", "sat", "near", "it", "tasty",
                          "awful", "staff", "menu", "wine"])


@settings(max_examples=150, deadline=None)
@given(left=st.lists(_words, max_size=6), right=st.lists(_words, max_size=6),
       aspect=st.sampled_from(["burger", "fish tacos", "decor"]),
       pol=st.sampled_from(["positive", "negative", "neutral"]), seed=st.integers(0, 2**31 - 1),
       terminal=st.sampled_from(["", " .", "!", " ?"]))
def test_contract_property(bank, left, right, aspect, pol, seed, terminal):
    text = " ".join(left + [aspect] + right) + terminal
    x = make_instance("h", text, aspect, start=len(" ".join(left + [""])) if left else 0, polarity=pol)
    a = add_diff_mix(x, bank, AugmentConfig(seed=seed), substream(seed, "augment", "h"))
    assert augmentation_violations(x, a, bank) == []
