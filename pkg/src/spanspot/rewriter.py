"""Question-to-statement rewriting.

Turns a natural wh-question into a declarative sentence containing exactly
one mask token, so inference inputs look like the declarative text the model
was trained on. Questions without a recognized wh-phrase get a mask appended.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import MASK_TOKEN

FALLBACK = "fallback"

# Patterns take A (text before the wh-phrase) and B (text after). Listed in
# matching-precedence order; multi-word "how" phrases come before bare "how".
_TEMPLATE_SPECS: tuple[tuple[str, str], ...] = (
    ("what", "{a} [MASK] {b}"),
    ("how many", "{a} the number of {b} is [MASK]"),
    ("how long", "{a} the length of {b} is [MASK]"),
    ("how much", "{a} [MASK] money {b}"),
    ("how", "{a} in [MASK] way {b}"),
    ("who", "{a} the person [MASK] {b}"),
    ("when", "{a} at the time of [MASK] {b}"),
    ("which", "{a} [MASK] {b}"),
    ("where", "{a} at the place of [MASK] {b}"),
    ("why", "{a} {b} because [MASK]"),
)


@dataclass(frozen=True)
class RewriteTemplate:
    wh_phrase: str
    pattern: str

    def apply(self, a: str, b: str) -> str:
        filled = self.pattern.format(a=a, b=b)
        return " ".join(filled.split())


@dataclass(frozen=True)
class RewrittenQuery:
    text: str
    matched_template: str


_TEMPLATES = tuple(RewriteTemplate(wh, pat) for wh, pat in _TEMPLATE_SPECS)
_TEMPLATE_RES = tuple(
    re.compile(r"\b" + re.escape(t.wh_phrase).replace(r"\ ", r"\s+") + r"\b", re.IGNORECASE)
    for t in _TEMPLATES
)


def template_table() -> tuple[RewriteTemplate, ...]:
    """The ten wh-phrase templates in matching-precedence order."""
    return _TEMPLATES


def rewrite(question: str) -> RewrittenQuery:
    """Rewrite a question into a masked declarative sentence.

    The leftmost wh-phrase match wins; ties at the same position are broken
    by template order. The matched template combines A (text before the
    phrase) and B (text after); trailing question marks are stripped and the
    result ends with a period. Without any wh-phrase match, the mask token is
    appended to the question body instead.
    """
    if not question:
        raise ValueError("question must be non-empty")
    body = question.strip()
    while body.endswith("?"):
        body = body[:-1].rstrip()

    best: tuple[int, int, re.Match[str]] | None = None
    for order, regex in enumerate(_TEMPLATE_RES):
        m = regex.search(body)
        if m is not None:
            key = (m.start(), order, m)
            if best is None or key[:2] < best[:2]:
                best = key

    if best is None:
        text = " ".join((body + " " + MASK_TOKEN).split())
        return RewrittenQuery(text=text, matched_template=FALLBACK)

    _, order, m = best
    template = _TEMPLATES[order]
    a = body[: m.start()].strip()
    b = body[m.end() :].strip()
    return RewrittenQuery(text=template.apply(a, b) + ".", matched_template=template.wh_phrase)
