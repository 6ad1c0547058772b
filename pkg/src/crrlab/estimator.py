"""scikit-learn style wrappers around the augmenter and the trainer."""

from __future__ import annotations

from dataclasses import fields, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._util import POLARITIES
from .aspect_bank import AspectBank, build_bank
from .augment import AugmentConfig, PairedDataset, augment_dataset, identity
from .corpus import Dataset, Instance, split_train_dev
from .model import Vocab, argmax_label, predict_proba
from .text import SentimentLexicon
from .trainer import TrainConfig, init_params, train


def check_instances(X, name: str = "X") -> list[Instance]:
    """Accept a Dataset or a sequence of Instance objects; reject anything else."""
    if isinstance(X, Dataset):
        return list(X.instances)
    if isinstance(X, PairedDataset):
        return X.originals
    if isinstance(X, (str, bytes)) or not hasattr(X, "__iter__"):
        raise TypeError(f"{name} must be a sequence of Instance objects")
    out = list(X)
    if not out:
        raise ValueError(f"{name} is empty")
    for x in out:
        if not isinstance(x, Instance):
            raise TypeError(f"{name} must contain Instance objects, got {type(x).__name__}")
    return out


def check_labels(X: Sequence[Instance], y) -> None:
    if y is None:
        return
    y = list(y)
    if len(y) != len(X):
        raise ValueError(f"X has {len(X)} instances but y has {len(y)} labels")
    for x, label in zip(X, y):
        if label != x.polarity:
            raise ValueError(f"label {label!r} for {x.id!r} disagrees with its polarity {x.polarity!r}")


class AddDiffMixAugmenter(TransformerMixin, BaseEstimator):
    """``fit`` builds the opinion-phrase bank, ``transform`` returns one pair per instance."""

    def __init__(self, min_phrases=1, max_phrases=3, front_probability=0.5, position_policy="mixed",
                 window=5, lexicon=None, seed=0):
        self.min_phrases = min_phrases
        self.max_phrases = max_phrases
        self.front_probability = front_probability
        self.position_policy = position_policy
        self.window = window
        self.lexicon = lexicon
        self.seed = seed

    def _config(self) -> AugmentConfig:
        return AugmentConfig(self.min_phrases, self.max_phrases, self.front_probability,
                             self.position_policy, seed=self.seed)

    def fit(self, X, y=None):
        X = check_instances(X)
        check_labels(X, y)
        self._config()
        lex = self.lexicon if self.lexicon is not None else SentimentLexicon.load()
        self.bank_: AspectBank = build_bank(Dataset("fit", "train", X), lex, self.window)
        return self

    def transform(self, X) -> PairedDataset:
        check_is_fitted(self, "bank_")
        X = check_instances(X)
        return augment_dataset(Dataset("transform", "train", X), self.bank_, self._config())


class CRRClassifier(ClassifierMixin, BaseEstimator):
    """Attention-pooling aspect sentiment classifier trained under one of four regimes.

    ``fit`` accepts pre-built ``pairs``; otherwise pair regimes augment ``X``
    with an :class:`AddDiffMixAugmenter` fitted on ``X``.  Without ``dev`` a
    stratified tenth of ``X`` is held out for epoch selection.
    """

    def __init__(self, regime="crr", epochs=20, batch_size=64, lr=1e-3, weight_decay=0.01, alpha=1.0,
                 divergence="kl_forward", dropout=0.3, embed_dim=64, hidden_dim=64,
                 warmup_fraction=0.05, dev_metric="accuracy", augmenter=None, seed=0):
        self.regime = regime
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.alpha = alpha
        self.divergence = divergence
        self.dropout = dropout
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.warmup_fraction = warmup_fraction
        self.dev_metric = dev_metric
        self.augmenter = augmenter
        self.seed = seed

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return replace(TrainConfig(), **{k: v for k, v in self.get_params(deep=False).items() if k in names})

    def fit(self, X, y=None, pairs: PairedDataset | None = None, dev=None):
        cfg = self.train_config()
        if pairs is None:
            X = check_instances(X)
            check_labels(X, y)
            if dev is None:
                train_d, dev_d = split_train_dev(Dataset("fit", "train", X), seed=self.seed)
                X = list(train_d.instances)
                dev = dev_d.instances
            if cfg.regime == "baseline":
                pairs = PairedDataset([(x, identity(x)) for x in X])
            else:
                aug = self.augmenter if self.augmenter is not None else AddDiffMixAugmenter(seed=self.seed)
                pairs = aug.fit(X).transform(X)
        elif dev is None:
            raise ValueError("dev instances are required when pairs are supplied")
        dev = check_instances(dev, "dev")
        self.vocab_ = Vocab.build(list(pairs.originals) + [a.instance for _, a in pairs.pairs])
        params, self.report_ = train(init_params(self.vocab_, cfg), self.vocab_, pairs,
                                     Dataset("dev", "dev", dev), cfg)
        self.params_ = params
        self.classes_ = np.array(POLARITIES)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return predict_proba(self.params_, self.vocab_, check_instances(X))

    def predict(self, X) -> np.ndarray:
        return np.array([argmax_label(p) for p in self.predict_proba(X)])
