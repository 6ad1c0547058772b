import pytest

from crrlab.aspect_bank import AspectBank, OpinionPhrase, build_bank, extract_phrase, sample_phrases
from crrlab.corpus import Dataset, make_instance
from crrlab.text import SentimentLexicon, span_to_token_range, tokenize


def test_tokenize_splits_punctuation_and_keeps_hyphens():
    assert tokenize("So-so fries, didn't care!") == ["so-so", "fries", ",", "didn't", "care", "!"]


def test_span_to_token_range():
    text = "The wine list was fine ."
    assert span_to_token_range(text, 4, 13) == (1, 3)


def test_lexicon_rejects_overlap():
    with pytest.raises(ValueError):
        SentimentLexicon(frozenset({"good"}), frozenset({"good"}), frozenset())


def test_bundled_lexicon_loads(lexicon):
    assert lexicon.polarity("Tasty") == "positive"
    assert lexicon.polarity("awful") == "negative"
    assert lexicon.is_negator("not")


def test_lexicon_bad_line():
    with pytest.raises(ValueError, match="line 2"):
        SentimentLexicon.from_lines(["good\tpositive", "oops"])


def test_extract_phrase_stops_at_clause_break(lexicon):
    x = make_instance("a", "The decor is beautiful but the music is too loud .", "music", polarity="negative")
    ph = extract_phrase(x, lexicon, 5)
    assert ph.text == "the music is too loud"
    assert ph.polarity == "negative"


def test_extract_phrase_needs_polar_word(lexicon):
    x = make_instance("a", "We sat near the window .", "window", polarity="positive")
    assert extract_phrase(x, lexicon, 5) is None


def test_build_bank_skips_neutral_and_dedupes(lexicon):
    xs = [make_instance("a", "The soup was cold .", "soup", polarity="negative"),
          make_instance("b", "The soup was cold .", "soup", polarity="negative"),
          make_instance("c", "The menu is standard .", "menu", polarity="neutral")]
    bank = build_bank(Dataset("d", "train", xs), lexicon)
    assert len(bank) == 1
    assert bank.stats.skipped_neutral == 1
    assert bank.stats.duplicates == 1


def test_build_bank_window_bound(train_set, lexicon):
    with pytest.raises(ValueError):
        build_bank(train_set, lexicon, window=1)


def test_bank_roundtrip(tmp_path, train_set, lexicon):
    bank = build_bank(train_set, lexicon)
    bank.save(tmp_path / "bank.jsonl")
    assert AspectBank.load(tmp_path / "bank.jsonl").phrases == bank.phrases


def test_mentioned_aspects_token_boundaries():
    bank = AspectBank([OpinionPhrase("great wine", "wine", "positive", "s1"),
                       OpinionPhrase("bad wine list", "wine list", "negative", "s2")])
    assert bank.mentioned_aspects("The wine list was long") == {"wine", "wine list"}
    assert bank.mentioned_aspects("Wines were fine") == set()


def test_sample_phrases_distinct_aspects_and_exclusion(rng):
    phrases = [OpinionPhrase(f"bad {a} {i}", a, "negative", f"s{a}{i}") for a in ("soup", "bread", "fish")
               for i in range(3)]
    bank = AspectBank(phrases)
    for _ in range(50):
        got = sample_phrases(bank, "negative", {"soup"}, 3, rng)
        aspects = [p.aspect_term for p in got]
        assert len(set(aspects)) == len(aspects) == 2
        assert "soup" not in aspects


def test_sample_phrases_empty_pool(rng):
    bank = AspectBank([OpinionPhrase("good soup", "soup", "positive", "s")])
    assert sample_phrases(bank, "negative", set(), 1, rng) == []
    with pytest.raises(ValueError):
        sample_phrases(bank, "neutral", set(), 1, rng)
    with pytest.raises(ValueError):
        sample_phrases(bank, "positive", set(), 4, rng)
