"""JSONL ingestion, validation and split management for ABSA data.

Each record carries one sentence, one target aspect (character span) and one
polarity.  ARTs-style files additionally hold variant records that point back
to their source instance through ``source_id``.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from ._util import LABEL_INDEX, POLARITIES, check_polarity, substream

STRATEGIES = ("RevTgt", "RevNon", "AddDiff")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class Span(NamedTuple):
    start: int
    end: int


def _norm_ws(s: str) -> str:
    return " ".join(s.split())


@dataclass(frozen=True)
class Instance:
    id: str
    text: str
    aspect_term: str
    aspect_span: Span
    polarity: str

    def __post_init__(self):
        if not self.text:
            raise DataError(f"instance {self.id!r}: empty text")
        start, end = self.aspect_span
        if not (0 <= start < end <= len(self.text)):
            raise DataError(f"instance {self.id!r}: span {tuple(self.aspect_span)} out of bounds")
        if _norm_ws(self.text[start:end]) != _norm_ws(self.aspect_term):
            raise DataError(
                f"instance {self.id!r}: text[{start}:{end}]={self.text[start:end]!r} "
                f"does not match aspect term {self.aspect_term!r}"
            )
        check_polarity(self.polarity)

    @property
    def label(self) -> int:
        return LABEL_INDEX[self.polarity]

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "aspect_term": self.aspect_term,
            "from": self.aspect_span.start,
            "to": self.aspect_span.end,
            "polarity": self.polarity,
        }


@dataclass(frozen=True)
class VariantRecord:
    source_id: str
    strategy: str
    instance: Instance

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise DataError(f"variant {self.instance.id!r}: unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class Dataset:
    name: str
    split: str
    instances: tuple[Instance, ...]
    variants: tuple[VariantRecord, ...] | None = None
    dropped_conflicts: int = 0

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.variants is not None:
            object.__setattr__(self, "variants", tuple(self.variants))
        if self.split not in ("train", "dev", "test"):
            raise DataError(f"unknown split {self.split!r}")
        seen = set()
        for x in self.instances:
            if x.id in seen:
                raise DataError(f"duplicate id {x.id!r}")
            seen.add(x.id)
        for v in self.variants or ():
            if v.instance.id in seen:
                raise DataError(f"duplicate id {v.instance.id!r}")
            seen.add(v.instance.id)

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def by_id(self) -> dict[str, Instance]:
        table = {x.id: x for x in self.instances}
        for v in self.variants or ():
            table[v.instance.id] = v.instance
        return table

    def labels(self) -> np.ndarray:
        return np.array([x.label for x in self.instances], dtype=np.int64)


@dataclass
class VariantGroup:
    source_id: str
    original: Instance
    variants: dict[str, Instance] = field(default_factory=dict)

    def members(self) -> list[Instance]:
        return [self.original, *self.variants.values()]

    def __len__(self):
        return 1 + len(self.variants)


def make_instance(id: str, text: str, aspect_term: str, start: int | None = None,
                  polarity: str = "neutral") -> Instance:
    """Build an instance, locating the aspect by its first occurrence when ``start`` is None."""
    if start is None:
        start = text.find(aspect_term)
        if start < 0:
            raise DataError(f"instance {id!r}: aspect {aspect_term!r} not found in text")
    return Instance(id, text, aspect_term, Span(start, start + len(aspect_term)), polarity)


def _instance_from_record(rec: dict, where: str) -> Instance:
    try:
        return Instance(
            id=str(rec["id"]),
            text=rec["text"],
            aspect_term=rec["aspect_term"],
            aspect_span=Span(int(rec["from"]), int(rec["to"])),
            polarity=rec["polarity"],
        )
    except KeyError as exc:
        raise DataError(f"{where}: missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{where}: {exc}") from None


def remove_conflicts(records: Iterable[dict]) -> tuple[list[dict], int]:
    records = list(records)
    kept = [r for r in records if r.get("polarity") != "conflict"]
    return kept, len(records) - len(kept)


def load_dataset(path: str | Path, kind: str = "original", split: str = "test",
                 name: str | None = None) -> Dataset:
    """Read a JSONL file of ``kind`` ``original`` or ``arts``.

    Conflict-polarity records are dropped and counted in ``dropped_conflicts``.
    Variant records (``arts`` only) must reference an original in the same file.
    """
    if kind not in ("original", "arts"):
        raise ValueError(f"unknown dataset kind {kind!r}")
    path = Path(path)
    originals: list[Instance] = []
    variant_rows: list[tuple[int, dict]] = []
    dropped = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: record is not an object")
            if rec.get("polarity") == "conflict":
                dropped += 1
                continue
            if "source_id" in rec:
                if kind != "arts":
                    raise DataError(f"{path}:{lineno}: variant record in an original-kind file")
                variant_rows.append((lineno, rec))
            else:
                originals.append(_instance_from_record(rec, f"{path}:{lineno}"))

    variants = None
    if kind == "arts":
        known = {x.id for x in originals}
        variants = []
        for lineno, rec in variant_rows:
            where = f"{path}:{lineno}"
            if rec["source_id"] not in known:
                raise DataError(f"{where}: dangling source_id {rec['source_id']!r}")
            variants.append(VariantRecord(str(rec["source_id"]), rec.get("strategy", ""),
                                          _instance_from_record(rec, where)))
    return Dataset(name or path.stem, split, tuple(originals), variants, dropped)


def save_dataset(d: Dataset, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for x in d.instances:
            fh.write(json.dumps(x.to_record(), ensure_ascii=False) + "\n")
        for v in d.variants or ():
            rec = v.instance.to_record()
            rec["source_id"] = v.source_id
            rec["strategy"] = v.strategy
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def split_train_dev(d: Dataset, dev_fraction: float = 0.1, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded split stratified by polarity.

    Per-class dev counts use largest-remainder allocation so the dev size is
    exactly ``round(dev_fraction * len(d))``.  Both outputs keep the input order.
    """
    if not 0 < dev_fraction < 0.5:
        raise ValueError(f"dev_fraction must be in (0, 0.5), got {dev_fraction}")
    if len(d) < 10:
        raise DataError(f"refusing to split a dataset of {len(d)} instances (need >= 10)")

    by_class: dict[str, list[int]] = defaultdict(list)
    for i, x in enumerate(d.instances):
        by_class[x.polarity].append(i)
    classes = [c for c in POLARITIES if by_class[c]]
    want = round(dev_fraction * len(d))
    exact = {c: dev_fraction * len(by_class[c]) for c in classes}
    alloc = {c: int(np.floor(exact[c])) for c in classes}
    remainder = sorted(classes, key=lambda c: (-(exact[c] - alloc[c]), POLARITIES.index(c)))
    for c in remainder[: want - sum(alloc.values())]:
        alloc[c] += 1

    rng = substream(seed, "split")
    dev_idx: set[int] = set()
    for c in classes:
        members = np.array(by_class[c])
        picked = rng.permutation(len(members))[: alloc[c]]
        dev_idx.update(int(i) for i in members[picked])

    train = tuple(x for i, x in enumerate(d.instances) if i not in dev_idx)
    dev = tuple(x for i, x in enumerate(d.instances) if i in dev_idx)
    return Dataset(d.name, "train", train), Dataset(d.name, "dev", dev)


def group_variants(d: Dataset) -> list[VariantGroup]:
    """One group per original instance; variants keyed by strategy."""
    groups = {x.id: VariantGroup(x.id, x) for x in d.instances}
    for v in d.variants or ():
        group = groups.get(v.source_id)
        if group is None:
            raise DataError(f"dangling source_id {v.source_id!r}")
        if v.strategy in group.variants:
            raise DataError(f"source {v.source_id!r} has two {v.strategy} variants")
        group.variants[v.strategy] = v.instance
    return list(groups.values())


def class_counts(d: Dataset) -> dict[str, int]:
    counts = Counter(x.polarity for x in d.instances)
    return {c: counts.get(c, 0) for c in POLARITIES}
