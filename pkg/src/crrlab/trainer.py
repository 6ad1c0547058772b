"""Mini-batch training for the baseline, adversarial, CRR and CAD regimes."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from ._util import LABEL_INDEX, substream
from .augment import PairedDataset
from .corpus import Dataset, Instance
from .metrics import PredictionRecord, accuracy, macro_f1
from .model import (ModelParams, Vocab, backward_batch, encode_instance, forward_batch,
                    make_batch, predict_proba, argmax_label)
from .objective import LossConfig, batch_terms, ce_logit_grad, div_logit_grads

REGIMES = ("baseline", "adversarial", "crr", "cad")
DEV_METRICS = {"accuracy": accuracy, "macro_f1": macro_f1}


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    regime: str = "crr"
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.01
    alpha: float = 1.0
    divergence: str = "kl_forward"
    freeze_original_in_div: bool = False
    alpha_grid: tuple[float, ...] = (1.0, 3.0, 5.0)
    lr_grid: tuple[float, ...] = (3e-3, 1e-3, 3e-4)
    warmup_fraction: float = 0.05
    dropout: float = 0.3
    embed_dim: int = 64
    hidden_dim: int = 64
    init_scale: float = 0.1
    dev_metric: str = "accuracy"
    seed: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not 1 <= self.epochs <= 40:
            raise ValueError(f"epochs must be in 1..40, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.alpha_grid or not self.lr_grid:
            raise ValueError("hyperparameter grids must be non-empty")
        if self.dev_metric not in DEV_METRICS:
            raise ValueError(f"unknown dev_metric {self.dev_metric!r}")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must be in [0, 1)")

    @property
    def loss_config(self) -> LossConfig:
        alpha = self.alpha if self.regime == "crr" else 0.0
        return LossConfig(alpha=alpha, divergence=self.divergence,
                          freeze_original_in_div=self.freeze_original_in_div)


@dataclass
class EpochRow:
    epoch: int
    mean_ce: float
    mean_div: float
    summed_div: float
    dev_metric: float


@dataclass
class TrainReport:
    rows: list[EpochRow] = field(default_factory=list)
    best_epoch: int = 0
    best_dev: float = float("-inf")
    config: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "mean_ce", "mean_div", "summed_div", "dev_metric"])
        for r in self.rows:
            w.writerow([r.epoch, repr(r.mean_ce), repr(r.mean_div), repr(r.summed_div), repr(r.dev_metric)])
        return buf.getvalue()


class AdamW:
    """Adam with decoupled weight decay and a linear warm-up from zero.

    Step ``t`` (0-based) uses ``lr * min(1, t / warmup_steps)``.
    """

    def __init__(self, params: ModelParams, lr: float, weight_decay: float = 0.01,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8, warmup_steps: int = 0):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.warmup_steps = warmup_steps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def lr_at(self, t: int) -> float:
        if self.warmup_steps > 0 and t < self.warmup_steps:
            return self.lr * t / self.warmup_steps
        return self.lr

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        lr = self.lr_at(self.t)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = getattr(grads, name)
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            m = getattr(self.m, name)
            v = getattr(self.v, name)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if lr == 0.0:
                continue
            p -= lr * ((m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * p)


def optimizer_step(state: AdamW, params: ModelParams, grads: ModelParams) -> ModelParams:
    state.step(params, grads)
    return params


def evaluate(params: ModelParams, vocab: Vocab, d: Dataset | Sequence[Instance],
             metric: str = "accuracy") -> float:
    instances = list(d)
    if not instances:
        raise ValueError("empty evaluation set")
    probs = predict_proba(params, vocab, instances)
    records = [PredictionRecord(x.id, x.polarity, argmax_label(p)) for x, p in zip(instances, probs)]
    return DEV_METRICS[metric](records)


class _Encoded:
    """Pre-tokenized pair data for fast batching."""

    def __init__(self, pairs: PairedDataset, vocab: Vocab, regime: str):
        self.orig = [encode_instance(x, vocab) for x, _ in pairs.pairs]
        self.aug = [encode_instance(a.instance, vocab) for _, a in pairs.pairs]
        self.y = np.array([LABEL_INDEX[x.polarity] for x, _ in pairs.pairs], dtype=np.int64)
        self.y_aug = np.array([LABEL_INDEX[a.instance.polarity] for _, a in pairs.pairs], dtype=np.int64)
        use = np.array([not a.is_identity for _, a in pairs.pairs], dtype=float)
        self.use_aug = np.zeros_like(use) if regime == "baseline" else use

    def __len__(self):
        return len(self.orig)


def _epoch_stats(params: ModelParams, enc: _Encoded, loss_cfg: LossConfig, chunk: int = 512):
    ce_sum, div_sum = 0.0, 0.0
    n_div = 0
    for i in range(0, len(enc), chunk):
        sl = slice(i, i + chunk)
        po = forward_batch(params, make_batch(enc.orig[sl])).probs
        pa = forward_batch(params, make_batch(enc.aug[sl])).probs
        ce_o, _, div = batch_terms(po, pa, enc.y[sl], loss_cfg)
        use = enc.use_aug[sl] > 0
        ce_sum += float(ce_o.sum())
        div_sum += float(div[use].sum())
        n_div += int(use.sum())
    return ce_sum / len(enc), div_sum / max(n_div, 1), div_sum


def train_step(params: ModelParams, enc: _Encoded, idx: np.ndarray, cfg: TrainConfig,
               loss_cfg: LossConfig, epoch: int, batch_no: int) -> tuple[ModelParams, float]:
    """Loss and gradient of one mini-batch (per-batch mean of the per-pair objective)."""
    B = len(idx)
    y = enc.y[idx]
    use = enc.use_aug[idx]
    rng_o = substream(cfg.seed, "dropout", epoch, batch_no, 0)
    cache_o = forward_batch(params, make_batch([enc.orig[i] for i in idx]), cfg.dropout, rng_o)
    ce_o = -np.log(np.clip(cache_o.probs[np.arange(B), y], loss_cfg.eps, 1 - loss_cfg.eps))
    g_o = ce_logit_grad(cache_o.probs, y, loss_cfg.eps)
    loss = float(ce_o.sum())

    if use.any():
        y_a = enc.y_aug[idx] if cfg.regime == "cad" else y
        rng_a = substream(cfg.seed, "dropout", epoch, batch_no, 1)
        cache_a = forward_batch(params, make_batch([enc.aug[i] for i in idx]), cfg.dropout, rng_a)
        pa = cache_a.probs
        ce_a = -np.log(np.clip(pa[np.arange(B), y_a], loss_cfg.eps, 1 - loss_cfg.eps))
        g_a = ce_logit_grad(pa, y_a, loss_cfg.eps)
        loss += float((use * ce_a).sum())
        if loss_cfg.alpha > 0:
            _, _, div = batch_terms(cache_o.probs, pa, y, loss_cfg)
            d_o, d_a = div_logit_grads(cache_o.probs, pa, loss_cfg.divergence, loss_cfg.eps)
            loss += loss_cfg.alpha * float((use * div).sum())
            if not loss_cfg.freeze_original_in_div:
                g_o = g_o + loss_cfg.alpha * use[:, None] * d_o
            g_a = g_a + loss_cfg.alpha * d_a
        g_a = use[:, None] * g_a / B
        grads, _ = backward_batch(cache_a, params, g_a)
        grads_o, _ = backward_batch(cache_o, params, g_o / B)
        for name, g in grads.items():
            g += getattr(grads_o, name)
    else:
        grads, _ = backward_batch(cache_o, params, g_o / B)
    return grads, loss / B


def train(params: ModelParams, vocab: Vocab, train_pairs: PairedDataset, dev: Dataset,
          cfg: TrainConfig) -> tuple[ModelParams, TrainReport]:
    """Train from ``params`` (not modified) and return the best-dev-epoch checkpoint.

    Selection uses the original dev split only; ties keep the earliest epoch.
    Batch order depends on (seed, epoch) and dropout on (seed, epoch, batch, branch).
    """
    if len(dev) == 0:
        raise ValueError("empty dev set")
    if len(train_pairs) == 0:
        raise ValueError("empty training set")
    params = params.copy()
    loss_cfg = cfg.loss_config
    enc = _Encoded(train_pairs, vocab, cfg.regime)
    n = len(enc)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    opt = AdamW(params, cfg.lr, cfg.weight_decay,
                warmup_steps=int(cfg.warmup_fraction * steps_per_epoch * cfg.epochs))
    report = TrainReport(config=asdict(cfg))
    best = params.copy()

    for epoch in range(1, cfg.epochs + 1):
        order = substream(cfg.seed, "shuffle", epoch).permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    grads, loss = train_step(params, enc, idx, cfg, loss_cfg, epoch, b)
            except FloatingPointError:
                raise TrainingDiverged(epoch, b) from None
            if not math.isfinite(loss) or not grads.is_finite():
                raise TrainingDiverged(epoch, b)
            opt.step(params, grads)
        if not params.is_finite():
            raise TrainingDiverged(epoch, steps_per_epoch - 1)
        mean_ce, mean_div, summed_div = _epoch_stats(params, enc, loss_cfg)
        dev_value = evaluate(params, vocab, dev, cfg.dev_metric)
        report.rows.append(EpochRow(epoch, mean_ce, mean_div, summed_div, dev_value))
        if dev_value > report.best_dev:
            report.best_dev = dev_value
            report.best_epoch = epoch
            best = params.copy()
    return best, report


def init_params(vocab: Vocab, cfg: TrainConfig) -> ModelParams:
    return ModelParams.init(len(vocab), cfg.embed_dim, cfg.hidden_dim,
                            substream(cfg.seed, "init"), cfg.init_scale)


@dataclass
class GridCell:
    alpha: float
    lr: float
    best_dev: float
    best_epoch: int


@dataclass
class GridResult:
    best_config: TrainConfig
    best_params: ModelParams
    best_report: TrainReport
    cells: list[GridCell]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "lr", "best_dev", "best_epoch"])
        for c in self.cells:
            w.writerow([repr(c.alpha), repr(c.lr), repr(c.best_dev), c.best_epoch])
        return buf.getvalue()


def grid_search(vocab: Vocab, train_pairs: PairedDataset, dev: Dataset, cfg: TrainConfig,
                alpha_grid: Sequence[float] | None = None, lr_grid: Sequence[float] | None = None,
                params: ModelParams | None = None) -> GridResult:
    """Train every (alpha, lr) cell from the same initialization and keep the best on dev.

    Ties prefer the smaller alpha, then the smaller learning rate.  Regimes other
    than CRR ignore alpha, so their grid collapses to the lr axis.
    """
    alphas = list(alpha_grid if alpha_grid is not None else cfg.alpha_grid)
    lrs = list(lr_grid if lr_grid is not None else cfg.lr_grid)
    if not alphas or not lrs:
        raise ValueError("hyperparameter grids must be non-empty")
    if cfg.regime != "crr":
        alphas = [cfg.alpha]
    start = params if params is not None else init_params(vocab, cfg)
    cells, runs = [], []
    for alpha in alphas:
        for lr in lrs:
            cell_cfg = replace(cfg, alpha=alpha, lr=lr)
            best_params, report = train(start, vocab, train_pairs, dev, cell_cfg)
            cells.append(GridCell(alpha, lr, report.best_dev, report.best_epoch))
            runs.append((cell_cfg, best_params, report))
    pick = max(range(len(cells)), key=lambda i: (cells[i].best_dev, -cells[i].alpha, -cells[i].lr))
    cfg_best, p_best, r_best = runs[pick]
    return GridResult(cfg_best, p_best, r_best, cells)
