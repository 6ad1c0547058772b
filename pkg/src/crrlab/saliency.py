"""Gradient-norm token saliency and its ANSI / HTML rendering."""

from __future__ import annotations

import html
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._util import LABEL_INDEX, POLARITIES
from .corpus import Instance
from .model import ModelParams, Vocab, backward, forward
from .objective import EPS, ce_logit_grad
from .text import is_punct, span_to_token_range, tokenize

DARK, MEDIUM, LIGHT = 0.66, 0.33, 0.0
_ANSI = {"dark": "\x1b[41m", "medium": "\x1b[101m", "light": "\x1b[47m"}
_ANSI_RESET = "\x1b[0m"
_HTML = {"dark": "#d62728", "medium": "#f28e8e", "light": "#fbdcdc"}


@dataclass(frozen=True)
class TokenSaliency:
    token: str
    norm: float
    intensity: float
    masked: bool


@dataclass(frozen=True)
class SaliencyMap:
    instance_id: str
    tokens: tuple[TokenSaliency, ...]
    target: str

    @property
    def empty(self) -> bool:
        return all(t.masked for t in self.tokens)


def token_saliency(params: ModelParams, vocab: Vocab, instance: Instance,
                   use_predicted: bool = False) -> SaliencyMap:
    """L2 norm of d CE / d hidden state for every token, normalized by the largest unmasked norm.

    Punctuation and the aspect term's tokens are masked.  When every unmasked
    norm is zero the unmasked tokens all get intensity 1.0.
    """
    tokens = tokenize(instance.text)
    lo, hi = span_to_token_range(instance.text, *instance.aspect_span)
    probs, cache = forward(params, vocab.encode(tokens), (lo, hi))
    y = int(np.argmax(probs)) if use_predicted else LABEL_INDEX[instance.polarity]
    g = ce_logit_grad(probs[None, :], np.array([y]), EPS)
    _, dH = backward(cache, params, g)
    norms = np.linalg.norm(dH, axis=1)
    masked = np.array([is_punct(t) or lo <= i < hi for i, t in enumerate(tokens)])
    live = norms[~masked]
    top = float(live.max()) if live.size else 0.0
    out = []
    for tok, n, m in zip(tokens, norms, masked):
        if m:
            val = 0.0
        elif top > 0.0:
            val = float(n) / top
        else:
            val = 1.0
        out.append(TokenSaliency(tok, float(n), val, bool(m)))
    target = POLARITIES[y]
    return SaliencyMap(instance.id, tuple(out), target)


def bucket(intensity: float, masked: bool = False) -> str | None:
    if masked or intensity <= LIGHT:
        return None
    if intensity >= DARK:
        return "dark"
    if intensity >= MEDIUM:
        return "medium"
    return "light"


def render(smap: SaliencyMap, mode: str = "html") -> str:
    if mode not in ("ansi", "html"):
        raise ValueError(f"unknown render mode {mode!r}")
    parts = []
    for t in smap.tokens:
        b = bucket(t.intensity, t.masked)
        if mode == "ansi":
            parts.append(t.token if b is None else f"{_ANSI[b]}{t.token}{_ANSI_RESET}")
        else:
            tok = html.escape(t.token)
            parts.append(tok if b is None else
                         f'<span class="sal-{b}" style="background:{_HTML[b]}">{tok}</span>')
    body = " ".join(parts)
    if mode == "ansi":
        head = f"# {smap.instance_id} (target: {smap.target})"
        if smap.empty:
            head += "\n# warning: every token is masked"
        return f"{head}\n{body}\n"
    head = f"<section id=\"{html.escape(smap.instance_id, quote=True)}\">\n" \
           f"<h3>{html.escape(smap.instance_id)} (target: {smap.target})</h3>\n"
    if smap.empty:
        head += "<!-- warning: every token is masked -->\n"
    return f"{head}<p>{body}</p>\n</section>\n"


def render_report(maps: Sequence[SaliencyMap], mode: str = "html") -> str:
    sections = "".join(render(m, mode) for m in maps)
    if mode == "ansi":
        return sections
    return ("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Token saliency</title></head>\n"
            f"<body>\n{sections}</body></html>\n")
