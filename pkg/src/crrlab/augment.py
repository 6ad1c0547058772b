"""AddDiffMix / AddDiff spurious augmentation and the RevTgt counterfactual flip."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import check_unit_interval, substream
from .aspect_bank import AspectBank, OpinionPhrase, sample_phrases
from .corpus import Dataset, Instance, Span
from .text import SentimentLexicon, normalize_term, span_to_token_range, token_offsets

OPPOSITE = {"positive": "negative", "negative": "positive"}
FLIP = OPPOSITE
KINDS = ("AddDiffMix", "AddDiff", "RevTgt", "identity")
REVTGT_WINDOW = 5


@dataclass(frozen=True)
class AugmentConfig:
    min_phrases: int = 1
    max_phrases: int = 3
    front_probability: float = 0.5
    position_policy: str = "mixed"
    front_template: str = "Although {phrases}, "
    rear_template: str = ", but {phrases}"
    joiner: str = " and "
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.min_phrases <= self.max_phrases <= 3:
            raise ValueError(f"need 1 <= min_phrases <= max_phrases <= 3, got "
                             f"{self.min_phrases}..{self.max_phrases}")
        check_unit_interval("front_probability", self.front_probability)
        if self.position_policy not in ("mixed", "rear_only"):
            raise ValueError(f"unknown position_policy {self.position_policy!r}")

    @property
    def effective_front_probability(self) -> float:
        return 0.0 if self.position_policy == "rear_only" else self.front_probability

    @property
    def kind(self) -> str:
        return "AddDiff" if self.position_policy == "rear_only" else "AddDiffMix"


@dataclass(frozen=True)
class AugmentedInstance:
    instance: Instance
    source_id: str
    position: str
    injected: tuple[OpinionPhrase, ...] = ()
    kind: str = "identity"
    injected_polarity: str | None = None

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def to_record(self) -> dict:
        return {
            "source_id": self.source_id,
            "kind": self.kind,
            "position": self.position,
            "injected_polarity": self.injected_polarity,
            "injected": [vars(ph) for ph in self.injected],
            "instance": self.instance.to_record(),
        }


@dataclass
class PairedDataset:
    pairs: list[tuple[Instance, AugmentedInstance]]
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for x, a in self.pairs:
            if a.source_id != x.id:
                raise ValueError(f"pair mismatch: {x.id!r} paired with augmentation of {a.source_id!r}")
            if x.id in seen:
                raise ValueError(f"original {x.id!r} appears twice")
            seen.add(x.id)
        if not self.counts:
            self.counts = audit_counts(a for _, a in self.pairs)

    def __len__(self):
        return len(self.pairs)

    @property
    def originals(self) -> list[Instance]:
        return [x for x, _ in self.pairs]

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            for x, a in self.pairs:
                rec = {"original": x.to_record(), **a.to_record()}
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PairedDataset":
        from .corpus import _instance_from_record

        pairs = []
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                where = f"{path}:{lineno}"
                x = _instance_from_record(rec["original"], where)
                inst = _instance_from_record(rec["instance"], where)
                aug = AugmentedInstance(inst, rec["source_id"], rec["position"],
                                        tuple(OpinionPhrase(**p) for p in rec["injected"]),
                                        rec["kind"], rec.get("injected_polarity"))
                pairs.append((x, aug))
        return cls(pairs)


def audit_counts(augs) -> dict[str, int]:
    counts = {"total": 0, "identity": 0, "front": 0, "rear": 0, "phrases": 0}
    for a in augs:
        counts["total"] += 1
        counts["phrases"] += len(a.injected)
        if a.is_identity:
            counts["identity"] += 1
        elif a.position in ("front", "rear"):
            counts[a.position] += 1
    return counts


def identity(x: Instance) -> AugmentedInstance:
    return AugmentedInstance(x, x.id, "none")


def _split_terminal(text: str) -> tuple[str, str]:
    """``("The food was good", " .")`` for ``"The food was good ."``; the space style is kept."""
    body = text.rstrip()
    end = len(body)
    while end > 0 and body[end - 1] in ".!?":
        end -= 1
    terminal = body[end:] or "."
    head = body[:end].rstrip()
    return head, body[len(head):end] + terminal


def add_diff_mix(x: Instance, bank: AspectBank, cfg: AugmentConfig,
                 rng: np.random.Generator) -> AugmentedInstance:
    """Inject 1-3 opposite-polarity phrases about aspects absent from ``x``.

    Rear: ``<body>, but <p1> and <p2>.``; front: ``Although <p1> and <p2>, <text>``.
    The label is kept.  Neutral targets get a fair coin for the injected side.
    Falls back to the identity augmentation when nothing is eligible.
    """
    if x.polarity == "neutral":
        want = ("positive", "negative")[int(rng.integers(2))]
    else:
        want = OPPOSITE[x.polarity]
    k = int(rng.integers(cfg.min_phrases, cfg.max_phrases + 1))
    exclude = bank.mentioned_aspects(x.text) | {normalize_term(x.aspect_term)}
    phrases = sample_phrases(bank, want, exclude, k, rng)
    front = rng.random() < cfg.effective_front_probability
    if not phrases:
        return identity(x)

    joined = cfg.joiner.join(ph.text for ph in phrases)
    if front:
        prefix = cfg.front_template.format(phrases=joined)
        text = prefix + x.text
        shift = len(prefix)
    else:
        body, terminal = _split_terminal(x.text)
        text = body + cfg.rear_template.format(phrases=joined) + terminal
        shift = 0
    start, end = x.aspect_span
    new = Instance(f"{x.id}#{cfg.kind}", text, x.aspect_term, Span(start + shift, end + shift), x.polarity)
    return AugmentedInstance(new, x.id, "front" if front else "rear", tuple(phrases), cfg.kind, want)


def rev_tgt(x: Instance, lex: SentimentLexicon) -> AugmentedInstance:
    """Flip the target sentiment by negating the nearest matching opinion word.

    Scans up to five tokens either side of the aspect, left to right, for a polar
    token whose effective polarity (lexicon polarity, flipped after a negator)
    equals the gold label.  A bare token gets ``not`` inserted before it; a negated
    one loses its negator.  Neutral targets and misses return the identity.
    """
    if x.polarity not in FLIP:
        return identity(x)
    toks = token_offsets(x.text)
    lo, hi = span_to_token_range(x.text, *x.aspect_span)
    candidates = [i for i in range(max(0, lo - REVTGT_WINDOW), min(len(toks), hi + REVTGT_WINDOW))
                  if not lo <= i < hi]
    for i in candidates:
        pol = lex.polarity(toks[i][0])
        if pol is None:
            continue
        negated = i > 0 and lex.is_negator(toks[i - 1][0]) and not lo <= i - 1 < hi
        effective = FLIP[pol] if negated else pol
        if effective != x.polarity:
            continue
        if negated:
            cut_from, cut_to = toks[i - 1][1], toks[i][1]
            text = x.text[:cut_from] + x.text[cut_to:]
            delta = -(cut_to - cut_from)
            edit_at = cut_from
        else:
            edit_at = toks[i][1]
            text = x.text[:edit_at] + "not " + x.text[edit_at:]
            delta = 4
        start, end = x.aspect_span
        if edit_at <= start:
            start, end = start + delta, end + delta
        new = Instance(f"{x.id}#RevTgt", text, x.aspect_term, Span(start, end), FLIP[x.polarity])
        return AugmentedInstance(new, x.id, "none", (), "RevTgt")
    return identity(x)


def augment_dataset(d: Dataset, bank: AspectBank, cfg: AugmentConfig) -> PairedDataset:
    """One AddDiffMix augmentation per instance, each from its own (seed, id) substream."""
    pairs = [(x, add_diff_mix(x, bank, cfg, substream(cfg.seed, "augment", x.id))) for x in d.instances]
    return PairedDataset(pairs)


def counterfactual_dataset(d: Dataset, lex: SentimentLexicon) -> PairedDataset:
    return PairedDataset([(x, rev_tgt(x, lex)) for x in d.instances])
