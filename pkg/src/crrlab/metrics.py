"""Accuracy, macro-F1, aspect robustness score and per-strategy degradation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from ._util import POLARITIES
from .corpus import STRATEGIES, VariantGroup


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    gold: str
    predicted: str

    @property
    def correct(self) -> bool:
        return self.gold == self.predicted


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    n: dict[str, int]
    ars: float | None = None
    notes: list[str] = field(default_factory=list)


@dataclass
class SubsetRow:
    strategy: str
    n_groups: int
    original_accuracy: float
    variant_accuracy: float

    @property
    def diff(self) -> float:
        return self.variant_accuracy - self.original_accuracy


@dataclass
class SubsetReport:
    rows: list[SubsetRow]
    omitted: list[str] = field(default_factory=list)


def _nonempty(records) -> list[PredictionRecord]:
    records = list(records)
    if not records:
        raise ValueError("no prediction records")
    return records


def accuracy(records: Iterable[PredictionRecord]) -> float:
    records = _nonempty(records)
    return sum(r.correct for r in records) / len(records)


def macro_f1(records: Iterable[PredictionRecord]) -> float:
    """Mean of the three per-class F1 scores; a 0/0 ratio counts as 0."""
    records = _nonempty(records)
    total = 0.0
    for c in POLARITIES:
        tp = sum(r.gold == c and r.predicted == c for r in records)
        fp = sum(r.gold != c and r.predicted == c for r in records)
        fn = sum(r.gold == c and r.predicted != c for r in records)
        denom = 2 * tp + fp + fn
        total += 2 * tp / denom if denom else 0.0
    return total / len(POLARITIES)


def _index(records: Iterable[PredictionRecord]) -> dict[str, PredictionRecord]:
    return {r.id: r for r in records}


def _lookup(table: Mapping[str, PredictionRecord], id: str) -> PredictionRecord:
    try:
        return table[id]
    except KeyError:
        raise KeyError(f"no prediction record for id {id!r}") from None


def ars(groups: Sequence[VariantGroup], records: Iterable[PredictionRecord]) -> float:
    """Fraction of groups whose original and every present variant are correct."""
    if not groups:
        raise ValueError("no variant groups")
    table = _index(records)
    ok = 0
    for g in groups:
        ok += all(_lookup(table, x.id).correct for x in g.members())
    return ok / len(groups)


def subset_analysis(groups: Sequence[VariantGroup], records: Iterable[PredictionRecord]) -> SubsetReport:
    table = _index(records)
    rows, omitted = [], []
    for strategy in STRATEGIES:
        having = [g for g in groups if strategy in g.variants]
        if not having:
            omitted.append(strategy)
            continue
        orig = sum(_lookup(table, g.original.id).correct for g in having) / len(having)
        var = sum(_lookup(table, g.variants[strategy].id).correct for g in having) / len(having)
        rows.append(SubsetRow(strategy, len(having), orig, var))
    return SubsetReport(rows, omitted)


def metrics_report(records: Sequence[PredictionRecord], groups: Sequence[VariantGroup] | None = None) -> MetricsReport:
    records = _nonempty(records)
    counts = {c: sum(r.gold == c for r in records) for c in POLARITIES}
    report = MetricsReport(accuracy(records), macro_f1(records), counts)
    if groups and any(g.variants for g in groups):
        report.ars = ars(groups, records)
    else:
        report.notes.append("no variants supplied; ARS omitted")
    return report


def report_json(metrics: MetricsReport, subsets: SubsetReport | None = None) -> str:
    doc = {"metrics": asdict(metrics)}
    if subsets is not None:
        doc["subsets"] = [{**asdict(r), "diff": r.diff} for r in subsets.rows]
        doc["omitted_strategies"] = subsets.omitted
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_table(metrics: MetricsReport, subsets: SubsetReport | None = None, title: str = "") -> str:
    pct = lambda v: "--" if v is None else f"{100 * v:6.2f}"  # noqa: E731
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'F1':>8} {'Acc.':>8} {'ARS':>8}")
    lines.append(f"{pct(metrics.macro_f1):>8} {pct(metrics.accuracy):>8} {pct(metrics.ars):>8}")
    if subsets is not None and subsets.rows:
        lines.append("")
        lines.append(f"{'Test Set':<10}{'Original':>10}{'ARTs':>10}{'Diff':>10}")
        for r in subsets.rows:
            arrow = "+" if r.diff >= 0 else "-"
            lines.append(f"{r.strategy:<10}{pct(r.original_accuracy):>10}{pct(r.variant_accuracy):>10}"
                         f"{arrow + format(abs(100 * r.diff), '.2f'):>10}")
        for s in subsets.omitted:
            lines.append(f"{s:<10}{'(no instances)':>30}")
    for note in metrics.notes:
        lines.append(f"# {note}")
    return "\n".join(lines) + "\n"
