"""Document-level prediction with sliding windows.

Long passages are split into overlapping word windows so each fits the
model's sequence budget next to the (already rewritten, mask-bearing)
question. The best-probability span across windows wins and is mapped back
to character offsets in the original passage text.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..corpus import tokenize
from .decode import DecodeError, predict_span
from .framing import frame_window
from .spotter import SpotterModel

DEFAULT_STRIDE = 128


class InferenceError(Exception):
    """Raised when a document/question pair cannot be predicted."""


@dataclass
class DocumentSpan:
    text: str
    char_start: int
    char_end: int
    word_start: int
    word_end: int
    probability: float
    window_index: int


def window_starts(n_words: int, window_size: int, stride: int) -> list[int]:
    starts = [0]
    while starts[-1] + window_size < n_words:
        starts.append(starts[-1] + stride)
    return starts


def predict_document(
    model: SpotterModel,
    passage_text: str,
    question_text: str,
    stride: int = DEFAULT_STRIDE,
    max_answer_length: int | None = None,
) -> DocumentSpan:
    """Predict the best answer span of a passage for a masked question."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    words = tokenize(passage_text)
    if not words:
        raise InferenceError("empty passage")
    question_words = [w.text for w in tokenize(question_text)]
    if max_answer_length is None:
        max_answer_length = model.config.max_answer_length

    budget = model.config.max_seq - len(question_words) - 3
    if budget < 1:
        raise InferenceError(
            f"question of {len(question_words)} words leaves no room for passage tokens "
            f"(max_seq={model.config.max_seq})"
        )

    word_texts = [w.text for w in words]
    best: DocumentSpan | None = None
    for w_idx, start in enumerate(window_starts(len(words), budget, stride)):
        window_words = word_texts[start : start + budget]
        framed = frame_window(window_words, question_words, model.vocab)
        try:
            sl, el = model.instance_logits(framed)
            pred = predict_span(sl, el, max_answer_length)
        except DecodeError:
            continue
        g_start = start + (pred.i_start - 1)  # window words begin after [CLS]
        g_end = start + (pred.i_end - 1)
        span = DocumentSpan(
            text=passage_text[words[g_start].start : words[g_end].end],
            char_start=words[g_start].start,
            char_end=words[g_end].end,
            word_start=g_start,
            word_end=g_end,
            probability=pred.probability,
            window_index=w_idx,
        )
        if best is None or span.probability > best.probability:
            best = span
    if best is None:
        raise InferenceError("no window produced a valid span")
    return best
