"""Aspect-anchored opinion phrases, the sampling pool for AddDiffMix.

Phrases are cut from training sentences with a lexicon window around the aspect
term and inherit the gold polarity of their source instance.  Neutral sources
are skipped: the augmenter always samples the *opposite* polarity.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Dataset, Instance
from .text import (SENTENCE_PUNCT, SentimentLexicon, find_token_sequence, is_punct,
                   normalize_term, span_to_token_range, token_offsets, tokenize)

MIN_PHRASE_TOKENS = 2
MAX_PHRASE_TOKENS = 20
# tokens that start or end a clause; the window never crosses them
CLAUSE_BREAKS = frozenset({",", "but", "and", "although", "though", "while", "whereas", "however"})


@dataclass(frozen=True)
class OpinionPhrase:
    text: str
    aspect_term: str
    polarity: str
    source_id: str

    @property
    def aspect_key(self) -> str:
        return normalize_term(self.aspect_term)


@dataclass
class BankStats:
    skipped_no_lexicon: int = 0
    skipped_neutral: int = 0
    skipped_length: int = 0
    duplicates: int = 0


@dataclass
class AspectBank:
    phrases: list[OpinionPhrase] = field(default_factory=list)
    stats: BankStats = field(default_factory=BankStats)

    def __post_init__(self):
        seen = set()
        unique = []
        for ph in self.phrases:
            key = (ph.text, ph.aspect_term)
            if key in seen:
                continue
            seen.add(key)
            unique.append(ph)
        self.phrases = unique
        self.by_polarity: dict[str, list[int]] = {"positive": [], "negative": []}
        self.by_aspect: dict[str, list[int]] = {}
        for i, ph in enumerate(self.phrases):
            if ph.polarity not in self.by_polarity:
                raise ValueError(f"bank phrases must be positive or negative, got {ph.polarity!r}")
            self.by_polarity[ph.polarity].append(i)
            self.by_aspect.setdefault(ph.aspect_key, []).append(i)
        self._aspect_tokens = {key: key.split() for key in self.by_aspect}

    def __len__(self):
        return len(self.phrases)

    def mentioned_aspects(self, text: str) -> set[str]:
        """Bank aspect keys occurring in ``text`` at token boundaries, case-insensitively."""
        tokens = tokenize(text)
        return {key for key, seq in self._aspect_tokens.items() if find_token_sequence(tokens, seq) >= 0}

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            for ph in self.phrases:
                fh.write(json.dumps(asdict(ph), ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "AspectBank":
        with Path(path).open(encoding="utf-8") as fh:
            return cls([OpinionPhrase(**json.loads(line)) for line in fh if line.strip()])


def _breaks(token: str) -> bool:
    return token in SENTENCE_PUNCT or token.lower() in CLAUSE_BREAKS


def extract_phrase(x: Instance, lex: SentimentLexicon, window: int) -> OpinionPhrase | None:
    """Window of ``window`` tokens either side of the aspect, cut at clause boundaries.

    Returns None when the window holds no polar lexicon token.
    """
    toks = token_offsets(x.text)
    lo, hi = span_to_token_range(x.text, *x.aspect_span)
    left = lo
    while left > 0 and lo - left < window and not _breaks(toks[left - 1][0]):
        left -= 1
    right = hi
    while right < len(toks) and right - hi < window and not _breaks(toks[right][0]):
        right += 1
    # no dangling commas or quotes at the phrase edges
    while left < lo and is_punct(toks[left][0]):
        left += 1
    while right > hi and is_punct(toks[right - 1][0]):
        right -= 1
    words = [t for t, _, _ in toks[left:right]]
    if not any(w in lex for i, w in enumerate(words) if not lo - left <= i < hi - left):
        return None
    if not MIN_PHRASE_TOKENS <= len(words) <= MAX_PHRASE_TOKENS:
        return None
    text = x.text[toks[left][1]:toks[right - 1][2]]
    return OpinionPhrase(text, x.aspect_term, x.polarity, x.id)


def build_bank(d: Dataset, lex: SentimentLexicon, window: int = 5) -> AspectBank:
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    stats = BankStats()
    phrases = []
    for x in d.instances:
        if x.polarity == "neutral":
            stats.skipped_neutral += 1
            continue
        ph = extract_phrase(x, lex, window)
        if ph is None:
            stats.skipped_no_lexicon += 1
            continue
        phrases.append(ph)
    bank = AspectBank(phrases, stats)
    stats.duplicates = len(phrases) - len(bank)
    return bank


def sample_phrases(bank: AspectBank, want_polarity: str, exclude_aspects: set[str], n: int,
                   rng: np.random.Generator) -> list[OpinionPhrase]:
    """Up to ``n`` phrases of ``want_polarity`` with distinct aspects outside ``exclude_aspects``.

    Uniform without replacement given ``rng``.  A successful draw always holds at
    least one phrase, so an empty list means the pool had nothing eligible.
    """
    if want_polarity not in ("positive", "negative"):
        raise ValueError(f"want_polarity must be positive or negative, got {want_polarity!r}")
    if not 1 <= n <= 3:
        raise ValueError(f"n must be in 1..3, got {n}")
    eligible = [i for i in bank.by_polarity[want_polarity]
                if bank.phrases[i].aspect_key not in exclude_aspects]
    if not eligible:
        return []
    picked: list[OpinionPhrase] = []
    taken: set[str] = set()
    for j in rng.permutation(len(eligible)):
        ph = bank.phrases[eligible[j]]
        if ph.aspect_key in taken:
            continue
        picked.append(ph)
        taken.add(ph.aspect_key)
        if len(picked) == n:
            break
    return picked
