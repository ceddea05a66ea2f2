"""Span decoding over start/end logits.

Positions with -inf logits are invalid. Probabilities come from softmax over
the valid positions; span ranking uses logit sums, which order identically to
probability products. Ties everywhere resolve to the smaller start, then the
smaller end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


class DecodeError(Exception):
    """Raised when no valid span exists for the given logits."""


@dataclass
class SpanPrediction:
    i_start: int
    i_end: int
    probability: float
    start_logits: np.ndarray
    end_logits: np.ndarray


def _softmax_valid(logits: np.ndarray) -> np.ndarray:
    finite = np.isfinite(logits)
    if not finite.any():
        raise DecodeError("no valid positions in logits")
    m = logits[finite].max()
    z = np.where(finite, np.exp(logits - m), 0.0)
    return z / z.sum()


def predict_span(
    start_logits: np.ndarray, end_logits: np.ndarray, max_answer_length: int
) -> SpanPrediction:
    """The valid (start, end) pair maximizing P_start * P_end."""
    sl = np.asarray(start_logits, dtype=np.float64)
    el = np.asarray(end_logits, dtype=np.float64)
    i, j = kernels.best_span(sl, el, max_answer_length)
    if i < 0:
        raise DecodeError("no valid span: check input framing and candidate positions")
    p_start = _softmax_valid(sl)
    p_end = _softmax_valid(el)
    return SpanPrediction(
        i_start=int(i),
        i_end=int(j),
        probability=float(p_start[i] * p_end[j]),
        start_logits=sl,
        end_logits=el,
    )


def top_k_spans(
    start_logits: np.ndarray, end_logits: np.ndarray, k: int, max_answer_length: int
) -> list[SpanPrediction]:
    """The k highest-probability valid spans, best first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    sl = np.asarray(start_logits, dtype=np.float64)
    el = np.asarray(end_logits, dtype=np.float64)
    starts, ends, _ = kernels.top_k_spans_arrays(sl, el, max_answer_length, k)
    if starts.size == 0:
        return []
    p_start = _softmax_valid(sl)
    p_end = _softmax_valid(el)
    return [
        SpanPrediction(
            i_start=int(i),
            i_end=int(j),
            probability=float(p_start[i] * p_end[j]),
            start_logits=sl,
            end_logits=el,
        )
        for i, j in zip(starts, ends)
    ]


def answer_confidence(
    start_logits: np.ndarray,
    end_logits: np.ndarray,
    gold: tuple[int, int],
    k: int = 20,
    max_answer_length: int = 10,
) -> float:
    """Softmax share of the gold span among the top-k span scores.

    Span score is start_logit + end_logit. Returns 0.0 when the gold span is
    not among the top-k.
    """
    sl = np.asarray(start_logits, dtype=np.float64)
    el = np.asarray(end_logits, dtype=np.float64)
    starts, ends, scores = kernels.top_k_spans_arrays(sl, el, max_answer_length, k)
    hit = np.nonzero((starts == gold[0]) & (ends == gold[1]))[0]
    if hit.size == 0:
        return 0.0
    shifted = np.exp(scores - scores.max())
    return float(shifted[hit[0]] / shifted.sum())
