"""Aspect-conditioned attention-pooling classifier with hand-written gradients.

Architecture (per instance, ``H`` = token embeddings, the last hidden layer)::

    m      = mean of H over the aspect tokens
    q      = m @ Wq
    s_i    = (H_i @ Wk) . q / sqrt(d)
    a      = softmax(s)                   # over real (unpadded) tokens
    u      = sum_i a_i H_i                # pooled representation
    logits = tanh(u @ W1 + b1) @ W2 + b2

Everything is batched over padded token matrices; a single instance is a
batch of one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._util import LABEL_INDEX, POLARITIES
from .corpus import Instance
from .text import span_to_token_range, tokenize

PAD, UNK = "<pad>", "<unk>"
CHECKPOINT_FORMAT = "crrlab-checkpoint"
CHECKPOINT_VERSION = 1


class Vocab:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD, UNK]
        self.stoi: dict[str, int] = {PAD: 0, UNK: 1}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)

    @classmethod
    def build(cls, instances: Iterable[Instance]) -> "Vocab":
        """Vocabulary in first-seen order over the given (training) instances."""
        return cls(tok for x in instances for tok in tokenize(x.text))

    def __len__(self):
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, 1) for t in tokens]


@dataclass
class ModelParams:
    E: np.ndarray
    Wq: np.ndarray
    Wk: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in fields(self))

    def items(self):
        return ((name, getattr(self, name)) for name in self.names)

    @property
    def embed_dim(self) -> int:
        return self.E.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.E.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.items()})

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for _, v in self.items())

    def check_shapes(self) -> None:
        V, d = self.E.shape
        h = self.W1.shape[1]
        expected = {"Wq": (d, d), "Wk": (d, d), "W1": (d, h), "b1": (h,), "W2": (h, 3), "b2": (3,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def init(cls, vocab_size: int, embed_dim: int = 64, hidden_dim: int = 64,
             rng: np.random.Generator | None = None, scale: float = 0.1) -> "ModelParams":
        """Weights uniform(-scale, scale); biases zero.  ``rng=None`` gives all zeros."""
        d, h = embed_dim, hidden_dim
        if rng is None:
            draw = lambda *shape: np.zeros(shape)  # noqa: E731
        else:
            draw = lambda *shape: rng.uniform(-scale, scale, size=shape)  # noqa: E731
        return cls(E=draw(vocab_size, d), Wq=draw(d, d), Wk=draw(d, d), W1=draw(d, h),
                   b1=np.zeros(h), W2=draw(h, 3), b2=np.zeros(3))


@dataclass
class Batch:
    ids: np.ndarray          # (B, L) int
    mask: np.ndarray         # (B, L) bool, True on real tokens
    aspect_w: np.ndarray     # (B, L) float, 1/n_aspect on aspect tokens

    def __len__(self):
        return self.ids.shape[0]


@dataclass
class ForwardCache:
    batch: Batch
    H: np.ndarray            # (B, L, d) last-layer hidden states
    m: np.ndarray            # (B, d) mean aspect embedding
    q: np.ndarray            # (B, d)
    K: np.ndarray            # (B, L, d)
    attn: np.ndarray         # (B, L)
    pooled: np.ndarray       # (B, d)
    drop: np.ndarray | None  # (B, d) inverted-dropout multipliers
    h1: np.ndarray           # (B, h)
    logits: np.ndarray       # (B, 3)
    probs: np.ndarray        # (B, 3)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def encode_instance(x: Instance, vocab: Vocab) -> tuple[list[int], tuple[int, int]]:
    return vocab.encode(tokenize(x.text)), span_to_token_range(x.text, *x.aspect_span)


def make_batch(encoded: Sequence[tuple[Sequence[int], tuple[int, int]]]) -> Batch:
    if not encoded:
        raise ValueError("empty batch")
    B = len(encoded)
    L = max(len(ids) for ids, _ in encoded)
    if L == 0:
        raise ValueError("empty token list")
    ids = np.zeros((B, L), dtype=np.int64)
    mask = np.zeros((B, L), dtype=bool)
    aspect_w = np.zeros((B, L))
    for b, (tok_ids, (lo, hi)) in enumerate(encoded):
        n = len(tok_ids)
        if n == 0:
            raise ValueError("empty token list")
        if not 0 <= lo < hi <= n:
            raise ValueError(f"aspect range ({lo}, {hi}) invalid for {n} tokens")
        ids[b, :n] = tok_ids
        mask[b, :n] = True
        aspect_w[b, lo:hi] = 1.0 / (hi - lo)
    return Batch(ids, mask, aspect_w)


def forward_batch(p: ModelParams, batch: Batch, dropout: float = 0.0,
                  rng: np.random.Generator | None = None) -> ForwardCache:
    if not p.is_finite():
        raise FloatingPointError("model parameters contain NaN or inf")
    if batch.ids.max() >= p.vocab_size:
        raise ValueError("token id out of vocabulary range")
    d = p.embed_dim
    scale = 1.0 / np.sqrt(d)
    H = p.E[batch.ids]
    m = np.einsum("bl,bld->bd", batch.aspect_w, H)
    q = m @ p.Wq
    K = H @ p.Wk
    s = np.einsum("bld,bd->bl", K, q) * scale
    s = np.where(batch.mask, s, -np.inf)
    attn = softmax(s, axis=1)
    pooled = np.einsum("bl,bld->bd", attn, H)
    drop = None
    if dropout > 0.0:
        if rng is None:
            raise ValueError("dropout needs an rng")
        keep = 1.0 - dropout
        drop = (rng.random(pooled.shape) < keep) / keep
        hidden_in = pooled * drop
    else:
        hidden_in = pooled
    h1 = np.tanh(hidden_in @ p.W1 + p.b1)
    logits = h1 @ p.W2 + p.b2
    return ForwardCache(batch, H, m, q, K, attn, pooled, drop, h1, logits, softmax(logits))


def backward_batch(cache: ForwardCache, p: ModelParams, upstream: np.ndarray) -> tuple[ModelParams, np.ndarray]:
    """Gradients of ``sum_b upstream[b] . logits[b]`` for every parameter and hidden state.

    Returns ``(param_grads, dH)`` where ``dH`` has the shape of ``cache.H``.
    """
    g = np.asarray(upstream, dtype=float)
    if g.shape != cache.logits.shape:
        raise ValueError(f"upstream gradient shape {g.shape} != logits shape {cache.logits.shape}")
    b = cache.batch
    scale = 1.0 / np.sqrt(p.embed_dim)
    hidden_in = cache.pooled if cache.drop is None else cache.pooled * cache.drop

    dW2 = cache.h1.T @ g
    db2 = g.sum(axis=0)
    dz1 = (g @ p.W2.T) * (1.0 - cache.h1 ** 2)
    dW1 = hidden_in.T @ dz1
    db1 = dz1.sum(axis=0)
    du = dz1 @ p.W1.T
    if cache.drop is not None:
        du = du * cache.drop

    a = cache.attn
    dH = a[:, :, None] * du[:, None, :]
    da = np.einsum("bld,bd->bl", cache.H, du)
    ds = a * (da - (a * da).sum(axis=1, keepdims=True)) * scale
    dK = ds[:, :, None] * cache.q[:, None, :]
    dH += dK @ p.Wk.T
    dWk = np.einsum("bld,ble->de", cache.H, dK)
    dq = np.einsum("bl,bld->bd", ds, cache.K)
    dWq = cache.m.T @ dq
    dm = dq @ p.Wq.T
    dH += b.aspect_w[:, :, None] * dm[:, None, :]

    dE = np.zeros_like(p.E)
    np.add.at(dE, b.ids[b.mask], dH[b.mask])
    grads = ModelParams(E=dE, Wq=dWq, Wk=dWk, W1=dW1, b1=db1, W2=dW2, b2=db2)
    return grads, dH


def forward(p: ModelParams, token_ids: Sequence[int], aspect_range: tuple[int, int]) -> tuple[np.ndarray, ForwardCache]:
    """Single-instance forward pass; returns the class distribution and the cache."""
    cache = forward_batch(p, make_batch([(token_ids, aspect_range)]))
    return cache.probs[0], cache


def backward(cache: ForwardCache, p: ModelParams, upstream: np.ndarray) -> tuple[ModelParams, np.ndarray]:
    grads, dH = backward_batch(cache, p, np.atleast_2d(upstream))
    if cache.logits.shape[0] == 1:
        n = int(cache.batch.mask[0].sum())
        return grads, dH[0, :n]
    return grads, dH


def argmax_label(dist: np.ndarray) -> str:
    # np.argmax returns the first maximum: negative < neutral < positive on ties
    return POLARITIES[int(np.argmax(dist))]


def predict_proba(p: ModelParams, vocab: Vocab, instances: Sequence[Instance],
                  batch_size: int = 256) -> np.ndarray:
    out = []
    encoded = [encode_instance(x, vocab) for x in instances]
    for i in range(0, len(encoded), batch_size):
        out.append(forward_batch(p, make_batch(encoded[i:i + batch_size])).probs)
    return np.concatenate(out) if out else np.zeros((0, 3))


def predict(p: ModelParams, vocab: Vocab, instance: Instance) -> str:
    return argmax_label(predict_proba(p, vocab, [instance])[0])


def label_vector(instances: Sequence[Instance]) -> np.ndarray:
    return np.array([LABEL_INDEX[x.polarity] for x in instances], dtype=np.int64)


def save_checkpoint(path: str | Path, p: ModelParams, vocab: Vocab, meta: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "vocab": vocab.itos,
        "tensors": {name: {"shape": list(v.shape), "data": v.ravel().tolist()} for name, v in p.items()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ModelParams, Vocab, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    tensors = {k: np.array(t["data"], dtype=float).reshape(t["shape"]) for k, t in doc["tensors"].items()}
    vocab = Vocab()
    vocab.itos = list(doc["vocab"])
    vocab.stoi = {t: i for i, t in enumerate(vocab.itos)}
    p = ModelParams(**tensors)
    p.check_shapes()
    return p, vocab, doc.get("meta", {})
