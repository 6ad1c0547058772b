"""Paired cross-entropy plus a weighted prediction-divergence penalty.

All logs are natural logs of probabilities clamped to ``[eps, 1 - eps]``.
Divergences additionally renormalize the clamped vectors so they compare two
proper distributions and stay non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import softmax

EPS = 1e-7
DIVERGENCES = ("kl_forward", "kl_reverse", "js")


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    divergence: str = "kl_forward"
    eps: float = EPS
    freeze_original_in_div: bool = False

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.divergence not in DIVERGENCES:
            raise ValueError(f"unknown divergence {self.divergence!r}")
        if not 0 < self.eps < 0.5:
            raise ValueError(f"eps must be in (0, 0.5), got {self.eps}")


@dataclass(frozen=True)
class LossBreakdown:
    ce_orig: float
    ce_aug: float
    div: float
    total: float


def _clamp(p, eps):
    p = np.asarray(p, dtype=float)
    return np.clip(p, eps, 1.0 - eps), (p > eps) & (p < 1.0 - eps)


def _clamp_norm(p, eps):
    c, live = _clamp(p, eps)
    s = c.sum(axis=-1, keepdims=True)
    return c / s, live, s


def cross_entropy_pair(p_orig, p_aug, y: int, eps: float = EPS) -> tuple[float, float]:
    po, _ = _clamp(p_orig, eps)
    pa, _ = _clamp(p_aug, eps)
    return float(-np.log(po[y])), float(-np.log(pa[y]))


def _div_terms(kind: str, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    if kind == "kl_forward":
        return (r * (np.log(r) - np.log(t))).sum(axis=-1)
    if kind == "kl_reverse":
        return (t * (np.log(t) - np.log(r))).sum(axis=-1)
    if kind == "js":
        mid = 0.5 * (r + t)
        return 0.5 * (r * (np.log(r) - np.log(mid))).sum(axis=-1) + \
            0.5 * (t * (np.log(t) - np.log(mid))).sum(axis=-1)
    raise ValueError(f"unknown divergence {kind!r}")


def divergence(kind: str, p, q, eps: float = EPS):
    """``kind(p, q)``: ``kl_forward`` is KL(p||q), ``kl_reverse`` is KL(q||p), ``js`` is symmetric.

    Works row-wise on stacked distributions; a single pair returns a float.
    """
    r, _, _ = _clamp_norm(p, eps)
    t, _, _ = _clamp_norm(q, eps)
    out = np.maximum(_div_terms(kind, r, t), 0.0)
    return float(out) if out.ndim == 0 else out


def _div_grad_normed(kind: str, r: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """d div / d r and d div / d t for normalized inputs."""
    if kind == "kl_forward":
        return np.log(r) - np.log(t) + 1.0, -r / t
    if kind == "kl_reverse":
        return -t / r, np.log(t) - np.log(r) + 1.0
    mid = 0.5 * (r + t)
    return 0.5 * (np.log(r) - np.log(mid)), 0.5 * (np.log(t) - np.log(mid))


def _through_clamp_norm(g_r: np.ndarray, r: np.ndarray, live: np.ndarray, s: np.ndarray) -> np.ndarray:
    # r = c / sum(c), c = clip(p): chain back to p
    g_c = (g_r - (g_r * r).sum(axis=-1, keepdims=True)) / s
    return g_c * live


def _through_softmax(g_p: np.ndarray, p: np.ndarray) -> np.ndarray:
    return p * (g_p - (g_p * p).sum(axis=-1, keepdims=True))


def crr_loss(p_orig, p_aug, y: int, cfg: LossConfig) -> LossBreakdown:
    ce_o, ce_a = cross_entropy_pair(p_orig, p_aug, y, cfg.eps)
    div = divergence(cfg.divergence, p_orig, p_aug, cfg.eps)
    return LossBreakdown(ce_o, ce_a, div, ce_o + ce_a + cfg.alpha * div)


def batch_terms(probs_orig: np.ndarray, probs_aug: np.ndarray, y: np.ndarray,
                cfg: LossConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row (ce_orig, ce_aug, div) for stacked distributions."""
    rows = np.arange(len(y))
    ce_o = -np.log(np.clip(probs_orig[rows, y], cfg.eps, 1 - cfg.eps))
    ce_a = -np.log(np.clip(probs_aug[rows, y], cfg.eps, 1 - cfg.eps))
    return ce_o, ce_a, divergence(cfg.divergence, probs_orig, probs_aug, cfg.eps)


def ce_logit_grad(probs: np.ndarray, y: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Gradient of ``-log clamp(p_y)`` with respect to the logits, row-wise."""
    probs = np.atleast_2d(probs)
    y = np.atleast_1d(y)
    rows = np.arange(len(y))
    py = probs[rows, y]
    g_p = np.zeros_like(probs)
    live = (py > eps) & (py < 1 - eps)
    g_p[rows, y] = np.where(live, -1.0 / np.clip(py, eps, 1 - eps), 0.0)
    return _through_softmax(g_p, probs)


def div_logit_grads(probs_orig: np.ndarray, probs_aug: np.ndarray, kind: str,
                    eps: float = EPS) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``kind(p_orig, p_aug)`` with respect to both logit vectors, row-wise."""
    po = np.atleast_2d(probs_orig)
    pa = np.atleast_2d(probs_aug)
    r, live_r, s_r = _clamp_norm(po, eps)
    t, live_t, s_t = _clamp_norm(pa, eps)
    g_r, g_t = _div_grad_normed(kind, r, t)
    g_po = _through_clamp_norm(g_r, r, live_r, s_r)
    g_pa = _through_clamp_norm(g_t, t, live_t, s_t)
    return _through_softmax(g_po, po), _through_softmax(g_pa, pa)


def crr_loss_gradient(logits_orig, logits_aug, y: int, cfg: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the CRR total with respect to both branches' logits.

    The divergence couples the branches, so both receive its gradient unless
    ``cfg.freeze_original_in_div`` treats the original prediction as constant.
    """
    po = softmax(np.asarray(logits_orig, dtype=float))
    pa = softmax(np.asarray(logits_aug, dtype=float))
    g_o = ce_logit_grad(po, np.array([y]), cfg.eps)[0]
    g_a = ce_logit_grad(pa, np.array([y]), cfg.eps)[0]
    if cfg.alpha > 0:
        d_o, d_a = div_logit_grads(po, pa, cfg.divergence, cfg.eps)
        if not cfg.freeze_original_in_div:
            g_o = g_o + cfg.alpha * d_o[0]
        g_a = g_a + cfg.alpha * d_a[0]
    return g_o, g_a
