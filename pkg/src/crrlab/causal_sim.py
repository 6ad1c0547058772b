"""Synthetic core/spurious sentence benchmark with explicit interventions.

Sentences are ``[fillers] the <aspect> was [not] <core> [fillers]`` with one
spurious token dropped into a random filler slot.  The core token (plus an
optional negator) fixes the label; spurious group ``k`` co-occurs with label
``k`` at rate ``rho``.  Interventions rewrite the spurious slot in place and
never touch labels or core tokens.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ._util import LABEL_INDEX, POLARITIES, check_unit_interval, substream
from .augment import AugmentedInstance, PairedDataset
from .corpus import Dataset, Instance, Span
from .model import ModelParams, Vocab, predict_proba
from .objective import divergence

NEGATOR = "not"

# 20 core tokens per label, sampled Zipf-style so the tail is rare in training
DEFAULT_CORE = {
    "negative": ("annoying", "arrogant", "awful", "bad", "bland", "boring", "broken", "buggy", "burnt",
                 "careless", "cheaply", "chewy", "cold", "complicated", "confusing", "cramped", "crash",
                 "crashed", "crashes", "dead"),
    "neutral": ("average", "ordinary", "standard", "typical", "okay", "usual", "regular", "plain", "normal",
                "moderate", "basic", "common", "middling", "so-so", "routine", "simple", "conventional",
                "modest", "medium", "adequate"),
    "positive": ("accurate", "affordable", "amazing", "attentive", "authentic", "awesome", "beautiful",
                 "best", "better", "bright", "brilliant", "capable", "charming", "cheap", "clean",
                 "comfortable", "convenient", "cool", "courteous", "cozy"),
}


@dataclass(frozen=True)
class CausalSpec:
    core: dict = field(default_factory=lambda: dict(DEFAULT_CORE))
    spurious_groups: tuple = (
        ("crispy", "patio", "jazz", "sunday"),
        ("window", "corner", "tuesday", "buffet"),
        ("garden", "brunch", "candle", "evening"),
    )
    aspects: tuple = ("food", "service", "menu", "staff", "wine", "pasta")
    fillers: tuple = ("we", "had", "really", "there", "it", "on", "a", "at", "and", "with")
    rho: float = 0.95
    negation_rate: float = 0.0
    spurious_tokens: int = 3
    core_zipf: float = 1.2
    max_fillers: int = 3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "core", {k: tuple(v) for k, v in self.core.items()})
        object.__setattr__(self, "spurious_groups", tuple(tuple(g) for g in self.spurious_groups))
        for name in ("aspects", "fillers"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        check_unit_interval("rho", self.rho)
        check_unit_interval("negation_rate", self.negation_rate)
        if self.spurious_tokens < 1:
            raise ValueError("spurious_tokens must be >= 1")
        if set(self.core) != set(POLARITIES) or any(not v for v in self.core.values()):
            raise ValueError("core lexicon needs a non-empty token set per polarity")
        if len(self.spurious_groups) != len(POLARITIES):
            raise ValueError("need one spurious group per label")
        core = {t for v in self.core.values() for t in v}
        spur = [t for g in self.spurious_groups for t in g]
        if len(set(spur)) != len(spur):
            raise ValueError("spurious groups must be disjoint")
        reserved = set(self.aspects) | set(self.fillers) | {NEGATOR, "the", "was", "."}
        if core & set(spur) or (core | set(spur)) & reserved:
            raise ValueError("core, spurious and template tokens must be disjoint")

    def core_weights(self, label: str) -> np.ndarray:
        """Zipf-like sampling weights over a label's core tokens (uniform at exponent 0)."""
        w = 1.0 / np.arange(1, len(self.core[label]) + 1) ** self.core_zipf
        return w / w.sum()

    def group_of(self, token: str) -> int:
        for k, g in enumerate(self.spurious_groups):
            if token in g:
                return k
        raise KeyError(token)

    @classmethod
    def from_dict(cls, doc: dict) -> "CausalSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown causal spec keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["core"] = {k: list(v) for k, v in self.core.items()}
        doc["spurious_groups"] = [list(g) for g in self.spurious_groups]
        doc["aspects"] = list(self.aspects)
        doc["fillers"] = list(self.fillers)
        return doc


@dataclass(frozen=True)
class Annotation:
    tokens: tuple[str, ...]
    aspect_pos: int
    core_pos: tuple[int, ...]
    spurious_pos: tuple[int, ...]
    spurious_groups: tuple[int, ...]
    label: str

    def roles(self) -> list[str]:
        out = ["filler"] * len(self.tokens)
        out[self.aspect_pos] = "aspect"
        for i in self.core_pos:
            out[i] = "core"
        for i, g in zip(self.spurious_pos, self.spurious_groups):
            out[i] = f"spurious:{g}"
        return out


@dataclass
class SyntheticCorpus:
    dataset: Dataset
    annotations: dict[str, Annotation]

    def __len__(self):
        return len(self.dataset)

    def save(self, data_path: str | Path, sidecar_path: str | Path) -> None:
        from .corpus import save_dataset

        save_dataset(self.dataset, data_path)
        with Path(sidecar_path).open("w", encoding="utf-8", newline="\n") as fh:
            for x in self.dataset.instances:
                ann = self.annotations[x.id]
                fh.write(json.dumps({"id": x.id, "tokens": list(ann.tokens), "roles": ann.roles()}) + "\n")


def _instance(id: str, tokens: Sequence[str], aspect_pos: int, label: str) -> Instance:
    text = " ".join(tokens)
    start = sum(len(t) + 1 for t in tokens[:aspect_pos])
    return Instance(id, text, tokens[aspect_pos], Span(start, start + len(tokens[aspect_pos])), label)


def _rebuild(corpus: SyntheticCorpus, anns: dict[str, Annotation], name: str) -> SyntheticCorpus:
    instances = tuple(_instance(x.id, anns[x.id].tokens, anns[x.id].aspect_pos, x.polarity)
                      for x in corpus.dataset.instances)
    return SyntheticCorpus(Dataset(name, corpus.dataset.split, instances), anns)


def generate(spec: CausalSpec, n: int, seed: int | None = None, rho: float | None = None,
             split: str = "train", name: str = "synthetic") -> SyntheticCorpus:
    """Draw ``n`` labelled sentences; ``rho`` overrides the spec's correlation."""
    rho = spec.rho if rho is None else check_unit_interval("rho", rho)
    rng = substream(spec.seed if seed is None else seed, "sim", split)
    n_groups = len(spec.spurious_groups)
    instances, anns = [], {}
    for i in range(n):
        label_idx = int(rng.integers(len(POLARITIES)))
        label = POLARITIES[label_idx]
        negated = label != "neutral" and rng.random() < spec.negation_rate
        source = POLARITIES[2 - label_idx] if negated else label
        core_tok = spec.core[source][int(rng.choice(len(spec.core[source]), p=spec.core_weights(source)))]
        group = label_idx if rng.random() < rho else int(rng.integers(n_groups))
        members = spec.spurious_groups[group]
        spur_toks = [members[int(j)] for j in rng.integers(len(members), size=spec.spurious_tokens)]
        aspect = spec.aspects[int(rng.integers(len(spec.aspects)))]

        pre = [spec.fillers[j] for j in rng.integers(len(spec.fillers), size=int(rng.integers(spec.max_fillers + 1)))]
        post = [spec.fillers[j] for j in rng.integers(len(spec.fillers), size=int(rng.integers(spec.max_fillers + 1)))]
        clause = ["the", aspect, "was"] + ([NEGATOR] if negated else []) + [core_tok]
        # spurious tokens go into filler gaps before or after the clause
        for tok in spur_toks:
            slot = int(rng.integers(len(pre) + len(post) + 2))
            if slot <= len(pre):
                pre.insert(slot, ("S", tok))
            else:
                post.insert(slot - len(pre) - 1, ("S", tok))
        tokens = [t[1] if isinstance(t, tuple) else t for t in pre + clause + post] + ["."]
        spur_pos = [i for i, t in enumerate(pre + clause + post) if isinstance(t, tuple)]
        aspect_pos = len(pre) + 1
        core_pos = list(range(aspect_pos + 2, len(pre) + len(clause)))
        id = f"{split}-{i:05d}"
        anns[id] = Annotation(tuple(tokens), aspect_pos, tuple(core_pos), tuple(spur_pos),
                              (group,) * len(spur_pos), label)
        instances.append(_instance(id, tokens, aspect_pos, label))
    return SyntheticCorpus(Dataset(name, split, tuple(instances)), anns)


@dataclass(frozen=True)
class Intervention:
    group: int
    value: str


def intervene(corpus: SyntheticCorpus, iv: Intervention, spec: CausalSpec) -> SyntheticCorpus:
    """do(S = value): every instance's spurious slot is set to ``value``."""
    if not 0 <= iv.group < len(spec.spurious_groups):
        raise KeyError(f"unknown spurious group {iv.group}")
    if iv.value not in spec.spurious_groups[iv.group]:
        raise ValueError(f"{iv.value!r} is not in spurious group {iv.group}")
    anns = {}
    for x in corpus.dataset.instances:
        ann = corpus.annotations[x.id]
        toks = list(ann.tokens)
        for pos in ann.spurious_pos:
            toks[pos] = iv.value
        anns[x.id] = replace(ann, tokens=tuple(toks), spurious_groups=(iv.group,) * len(ann.spurious_pos))
    return _rebuild(corpus, anns, f"{corpus.dataset.name}-do{iv.group}-{iv.value}")


def adversarial_shift(corpus: SyntheticCorpus, spec: CausalSpec, seed: int) -> SyntheticCorpus:
    """Move every spurious slot to a group correlated with a *different* label."""
    rng = substream(seed, "adversarial")
    n_groups = len(spec.spurious_groups)
    anns = {}
    for x in corpus.dataset.instances:
        ann = corpus.annotations[x.id]
        toks = list(ann.tokens)
        others = [g for g in range(n_groups) if g != LABEL_INDEX[x.polarity]]
        g = others[int(rng.integers(len(others)))]
        members = spec.spurious_groups[g]
        for pos in ann.spurious_pos:
            toks[pos] = members[int(rng.integers(len(members)))]
        groups = [g] * len(ann.spurious_pos)
        anns[x.id] = replace(ann, tokens=tuple(toks), spurious_groups=tuple(groups))
    return _rebuild(corpus, anns, f"{corpus.dataset.name}-adversarial")


def all_interventions(spec: CausalSpec) -> list[Intervention]:
    return [Intervention(k, tok) for k, g in enumerate(spec.spurious_groups) for tok in g]


def append_spurious(corpus: SyntheticCorpus, spec: CausalSpec, seed: int, min_tokens: int = 1,
                    max_tokens: int = 3, front_probability: float = 0.5) -> PairedDataset:
    """Training pairs whose augmented side gains spurious-only content.

    Injected tokens come from one group tied to a label other than the target's,
    joined by ``and``, and are prepended or appended with ``front_probability``.
    The label is unchanged.
    """
    pairs = []
    n_groups = len(spec.spurious_groups)
    for x in corpus.dataset.instances:
        rng = substream(seed, "append", x.id)
        others = [g for g in range(n_groups) if g != LABEL_INDEX[x.polarity]]
        g = others[int(rng.integers(len(others)))]
        k = int(rng.integers(min_tokens, max_tokens + 1))
        picks = [spec.spurious_groups[g][j] for j in rng.permutation(len(spec.spurious_groups[g]))[:k]]
        clause = " and ".join(picks)
        front = rng.random() < front_probability
        if front:
            prefix = f"{clause} , "
            text = prefix + x.text
            shift = len(prefix)
        else:
            text = x.text[:-2] + f" , {clause} ." if x.text.endswith(" .") else f"{x.text} , {clause}"
            shift = 0
        start, end = x.aspect_span
        aug = Instance(f"{x.id}#append", text, x.aspect_term, Span(start + shift, end + shift), x.polarity)
        pairs.append((x, AugmentedInstance(aug, x.id, "front" if front else "rear", (), "AddDiffMix",
                                           POLARITIES[g])))
    return PairedDataset(pairs)


def mutual_information(a: Sequence[int], b: Sequence[int]) -> float:
    """Plug-in mutual information (nats) between two discrete sequences."""
    a = np.asarray(a)
    b = np.asarray(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1.0)
    joint /= joint.sum()
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float((joint[nz] * np.log(joint[nz] / (pa @ pb)[nz])).sum())


def spurious_label_pairs(corpus: SyntheticCorpus) -> tuple[list[int], list[int]]:
    groups, labels = [], []
    for x in corpus.dataset.instances:
        groups.append(corpus.annotations[x.id].spurious_groups[0])
        labels.append(LABEL_INDEX[x.polarity])
    return groups, labels


@dataclass
class InvarianceGap:
    mean: float
    max: float
    flip_rate: float
    mean_tv: float
    n_pairs: int
    notes: list[str] = field(default_factory=list)


def invariance_gap(params: ModelParams, vocab: Vocab, corpus: SyntheticCorpus,
                   interventions: Sequence[Intervention], spec: CausalSpec,
                   kind: str = "kl_forward") -> InvarianceGap:
    """Divergence between predictions before and after each intervention.

    An empty intervention list gives a zero gap with a note.
    """
    if not interventions:
        return InvarianceGap(0.0, 0.0, 0.0, 0.0, 0, ["empty intervention list; gap defined as 0"])
    base = predict_proba(params, vocab, corpus.dataset.instances)
    divs, tvs, flips = [], [], []
    for iv in interventions:
        moved = predict_proba(params, vocab, intervene(corpus, iv, spec).dataset.instances)
        divs.append(divergence(kind, base, moved))
        tvs.append(0.5 * np.abs(base - moved).sum(axis=1))
        flips.append(base.argmax(axis=1) != moved.argmax(axis=1))
    divs = np.concatenate(divs)
    return InvarianceGap(float(divs.mean()), float(divs.max()), float(np.concatenate(flips).mean()),
                         float(np.concatenate(tvs).mean()), int(divs.size))


@dataclass(frozen=True)
class TaskFamily:
    """Derived tasks as relabelings of the three-way reference task."""

    tasks: dict = field(default_factory=lambda: {
        "polarity": (0, 1, 2),
        "negative_vs_rest": (0, 1, 1),
        "positive_vs_rest": (0, 0, 1),
        "polar_vs_neutral": (0, 1, 0),
    })

    def __post_init__(self):
        for name, mapping in self.tasks.items():
            if len(mapping) != len(POLARITIES):
                raise ValueError(f"task {name!r}: relabeling must map all {len(POLARITIES)} reference labels")
            targets = set(mapping)
            if targets != set(range(max(targets) + 1)):
                raise ValueError(f"task {name!r}: relabeling is not surjective onto 0..{max(targets)}")

    def matrix(self, name: str) -> np.ndarray:
        mapping = self.tasks[name]
        M = np.zeros((len(mapping), max(mapping) + 1))
        M[np.arange(len(mapping)), mapping] = 1.0
        return M


def total_variation(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)


def pushforward_tv(p: np.ndarray, q: np.ndarray, M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(TV between reference distributions, TV between their images under ``M``)."""
    return total_variation(p, q), total_variation(p @ M, q @ M)


@dataclass
class TransferReport:
    reference_mean_tv: float
    tasks: dict[str, dict]
    violations: int
    n_pairs: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def verify_transfer(params: ModelParams, vocab: Vocab, corpus: SyntheticCorpus,
                    interventions: Sequence[Intervention], spec: CausalSpec,
                    family: TaskFamily | None = None, tolerance: float = 1e-12) -> TransferReport:
    """Check TV(task image) <= TV(reference) for every instance and intervention."""
    family = family or TaskFamily()
    base = predict_proba(params, vocab, corpus.dataset.instances)
    moved = [predict_proba(params, vocab, intervene(corpus, iv, spec).dataset.instances) for iv in interventions]
    ref_tv = np.concatenate([total_variation(base, m) for m in moved]) if moved else np.zeros(0)
    tasks, violations = {}, 0
    for name in family.tasks:
        M = family.matrix(name)
        task_tv = np.concatenate([total_variation(base @ M, m @ M) for m in moved]) if moved else np.zeros(0)
        bad = int((task_tv > ref_tv + tolerance).sum())
        violations += bad
        tasks[name] = {
            "mean_tv": float(task_tv.mean()) if task_tv.size else 0.0,
            "max_tv": float(task_tv.max()) if task_tv.size else 0.0,
            "violations": bad,
        }
    return TransferReport(float(ref_tv.mean()) if ref_tv.size else 0.0, tasks, violations, int(ref_tv.size))


def random_transfer_trials(n: int, family: TaskFamily | None = None, seed: int = 0,
                           tolerance: float = 1e-12) -> int:
    """Violations of the pushforward TV inequality over ``n`` random distribution pairs per task."""
    family = family or TaskFamily()
    rng = substream(seed, "transfer-trials")
    p = rng.dirichlet(np.ones(len(POLARITIES)), size=n)
    q = rng.dirichlet(np.ones(len(POLARITIES)), size=n)
    bad = 0
    for name in family.tasks:
        ref, img = pushforward_tv(p, q, family.matrix(name))
        bad += int((img > ref + tolerance).sum())
    return bad
