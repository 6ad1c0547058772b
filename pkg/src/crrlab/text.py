"""Tokenization and the sentiment lexicon shared by the bank, augmenter and model."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

_TOKEN_RE = re.compile(r"\w+(?:['\-]\w+)*|[^\w\s]")
SENTENCE_PUNCT = frozenset(".!?;")


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens with every punctuation mark split off.

    >>> tokenize("Tasty burgers!")
    ['tasty', 'burgers', '!']
    """
    return [m.group().lower() for m in _TOKEN_RE.finditer(text)]


def token_offsets(text: str) -> list[tuple[str, int, int]]:
    """Tokens with their character offsets in ``text``."""
    return [(m.group().lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def is_punct(token: str) -> bool:
    return not any(ch.isalnum() for ch in token)


def span_to_token_range(text: str, start: int, end: int) -> tuple[int, int]:
    """Token index range ``[lo, hi)`` covering character span ``[start, end)``."""
    idx = [i for i, (_, s, e) in enumerate(token_offsets(text)) if s < end and e > start]
    if not idx:
        raise ValueError(f"span ({start}, {end}) covers no token of {text!r}")
    return idx[0], idx[-1] + 1


def normalize_term(term: str) -> str:
    return " ".join(tokenize(term))


def find_token_sequence(haystack: list[str], needle: list[str]) -> int:
    n = len(needle)
    if n == 0:
        return -1
    for i in range(len(haystack) - n + 1):
        if haystack[i:i + n] == needle:
            return i
    return -1


@dataclass(frozen=True)
class SentimentLexicon:
    positive: frozenset[str]
    negative: frozenset[str]
    negators: frozenset[str]

    def __post_init__(self):
        if self.positive & self.negative:
            raise ValueError(f"tokens listed as both polarities: {sorted(self.positive & self.negative)}")
        if self.negators & (self.positive | self.negative):
            raise ValueError("negators overlap the polar word lists")

    def polarity(self, token: str) -> str | None:
        token = token.lower()
        if token in self.positive:
            return "positive"
        if token in self.negative:
            return "negative"
        return None

    def is_negator(self, token: str) -> bool:
        return token.lower() in self.negators

    def __contains__(self, token: str) -> bool:
        return self.polarity(token) is not None

    @classmethod
    def from_lines(cls, lines) -> "SentimentLexicon":
        buckets: dict[str, set[str]] = {"positive": set(), "negative": set(), "negator": set()}
        for lineno, raw in enumerate(lines, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                token, kind = line.split("\t")
                buckets[kind].add(token.lower())
            except (ValueError, KeyError):
                raise ValueError(f"lexicon line {lineno}: expected 'token<TAB>positive|negative|negator'") from None
        return cls(frozenset(buckets["positive"]), frozenset(buckets["negative"]),
                   frozenset(buckets["negator"]))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "SentimentLexicon":
        """Read a lexicon file; ``None`` loads the bundled word list."""
        if path is None:
            text = resources.files("crrlab").joinpath("data/lexicon.tsv").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.from_lines(text.splitlines())
