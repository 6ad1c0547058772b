"""Independent checks of the augmentation contract, shared by unit and acceptance tests."""

from crrlab.text import normalize_term, tokenize

OPPOSITE = {"positive": "negative", "negative": "positive"}


def _contains_tokens(text, phrase):
    hay, needle = tokenize(text), tokenize(phrase)
    return any(hay[i:i + len(needle)] == needle for i in range(len(hay) - len(needle) + 1))


def augmentation_violations(x, aug, bank, front_template="Although {phrases}, "):
    """List of broken contract clauses for one AddDiffMix output (empty when it holds)."""
    bad = []
    y = aug.instance
    if aug.is_identity:
        return bad if y == x else ["identity augmentation altered the instance"]
    if not 1 <= len(aug.injected) <= 3:
        bad.append(f"{len(aug.injected)} phrases")
    pols = {p.polarity for p in aug.injected}
    if x.polarity in OPPOSITE and pols != {OPPOSITE[x.polarity]}:
        bad.append(f"phrase polarity {pols} for a {x.polarity} target")
    if x.polarity == "neutral" and len(pols) != 1:
        bad.append("mixed phrase polarity for a neutral target")
    aspects = [normalize_term(p.aspect_term) for p in aug.injected]
    if len(set(aspects)) != len(aspects):
        bad.append("repeated injected aspect")
    present = {a for a in bank.by_aspect if _contains_tokens(x.text, a)} | {normalize_term(x.aspect_term)}
    if set(aspects) & present:
        bad.append(f"injected aspect already present: {set(aspects) & present}")
    if y.polarity != x.polarity:
        bad.append("label changed")
    s, e = y.aspect_span
    if y.text[s:e] != x.text[x.aspect_span.start:x.aspect_span.end]:
        bad.append("aspect span does not cover the aspect")
    shift = s - x.aspect_span.start
    if aug.position == "rear" and shift != 0:
        bad.append("rear insertion moved the aspect")
    if aug.position == "front":
        if not y.text.endswith(x.text) or shift != len(y.text) - len(x.text):
            bad.append("front insertion did not prefix the original text")
    if not all(_contains_tokens(y.text, p.text) for p in aug.injected):
        bad.append("phrase text missing from output")
    return bad
