"""End-to-end runs on the synthetic causal benchmark.

One run generates train / dev / IID-test splits from a :class:`CausalSpec`,
builds an adversarially shifted copy of the test split, pairs every training
instance with a spurious-append augmentation, trains one regime and measures
IID accuracy, shifted accuracy, the intervention gap and gap transfer.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from .augment import PairedDataset
from .causal_sim import (CausalSpec, SyntheticCorpus, adversarial_shift, all_interventions,
                         append_spurious, generate, invariance_gap, verify_transfer)
from .model import ModelParams, Vocab
from .trainer import TrainConfig, TrainReport, evaluate, init_params, train


@dataclass(frozen=True)
class BenchmarkConfig:
    spec: CausalSpec = field(default_factory=CausalSpec)
    n_train: int = 1000
    n_dev: int = 300
    n_test: int = 1000
    append_min: int = 1
    append_max: int = 3
    append_front_probability: float = 0.5
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=15, lr=3e-3, alpha=3.0))

    def __post_init__(self):
        if min(self.n_train, self.n_dev, self.n_test) < 1:
            raise ValueError("split sizes must be >= 1")
        if not 1 <= self.append_min <= self.append_max:
            raise ValueError("need 1 <= append_min <= append_max")

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown benchmark keys: {sorted(unknown)}")
        if "spec" in doc:
            doc["spec"] = CausalSpec.from_dict(doc["spec"])
        if "train" in doc:
            train_known = {f.name for f in fields(TrainConfig)}
            bad = set(doc["train"]) - train_known
            if bad:
                raise ValueError(f"unknown train keys: {sorted(bad)}")
            tr = dict(doc["train"])
            for k in ("alpha_grid", "lr_grid"):
                if k in tr:
                    tr[k] = tuple(tr[k])
            doc["train"] = replace(cls().train, **tr)
        return cls(**doc)

    def to_dict(self) -> dict:
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc["spec"] = self.spec.to_dict()
        doc["train"] = asdict(self.train)
        doc["train"]["alpha_grid"] = list(self.train.alpha_grid)
        doc["train"]["lr_grid"] = list(self.train.lr_grid)
        return doc


@dataclass
class BenchmarkData:
    train: SyntheticCorpus
    dev: SyntheticCorpus
    test: SyntheticCorpus
    shifted: SyntheticCorpus
    pairs: PairedDataset
    vocab: Vocab


@dataclass
class BenchmarkResult:
    regime: str
    seed: int
    iid_accuracy: float
    shifted_accuracy: float
    gap_mean: float
    gap_mean_tv: float
    flip_rate: float
    transfer: dict
    report: TrainReport

    def summary(self) -> dict:
        return {
            "regime": self.regime,
            "seed": self.seed,
            "iid_accuracy": self.iid_accuracy,
            "shifted_accuracy": self.shifted_accuracy,
            "gap_mean": self.gap_mean,
            "gap_mean_tv": self.gap_mean_tv,
            "flip_rate": self.flip_rate,
            "best_epoch": self.report.best_epoch,
            "summed_div_first": self.report.rows[0].summed_div,
            "summed_div_last": self.report.rows[-1].summed_div,
            "transfer": self.transfer,
        }


def build_data(cfg: BenchmarkConfig, seed: int) -> BenchmarkData:
    spec = cfg.spec
    tr = generate(spec, cfg.n_train, seed=seed, split="train")
    dv = generate(spec, cfg.n_dev, seed=seed, split="dev")
    te = generate(spec, cfg.n_test, seed=seed, split="test")
    shifted = adversarial_shift(te, spec, seed)
    pairs = append_spurious(tr, spec, seed, cfg.append_min, cfg.append_max, cfg.append_front_probability)
    vocab = Vocab.build(list(tr.dataset.instances) + [a.instance for _, a in pairs.pairs])
    return BenchmarkData(tr, dv, te, shifted, pairs, vocab)


def run_regime(cfg: BenchmarkConfig, regime: str, seed: int, data: BenchmarkData | None = None,
               **overrides) -> tuple[BenchmarkResult, ModelParams]:
    """Train one regime on one seed's benchmark draw and score it."""
    data = data or build_data(cfg, seed)
    tcfg = replace(cfg.train, regime=regime, seed=seed, **overrides)
    params, report = train(init_params(data.vocab, tcfg), data.vocab, data.pairs, data.dev.dataset, tcfg)
    ivs = all_interventions(cfg.spec)
    gap = invariance_gap(params, data.vocab, data.test, ivs, cfg.spec)
    tr = verify_transfer(params, data.vocab, data.test, ivs, cfg.spec)
    transfer = {"reference_mean_tv": tr.reference_mean_tv, "violations": tr.violations,
                "n_pairs": tr.n_pairs, "tasks": tr.tasks}
    result = BenchmarkResult(regime, seed, evaluate(params, data.vocab, data.test.dataset),
                             evaluate(params, data.vocab, data.shifted.dataset),
                             gap.mean, gap.mean_tv, gap.flip_rate, transfer, report)
    return result, params
