"""Instance scoring and selection.

Each masked instance gets three scores: passage informativeness, masked-span
informativeness, and the best context similarity among the surviving
occurrences of the answer (which also fixes the gold occurrence). The total
is a linear combination; the top-N instances by total become training data.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import MASK_TOKEN, IdfTable, is_punct_token
from .masker import MaskedInstance, instance_from_record, instance_to_record

_SENTENCE_END = frozenset({".", "!", "?"})

DEFAULT_ALPHA = 0.5
DEFAULT_BETA = 200.0
DEFAULT_TOP_N = 500_000
DEFAULT_WINDOW = 10


@dataclass(frozen=True)
class RankScores:
    score_pass: float
    score_mask: float
    score_ans: float
    total: float


@dataclass(frozen=True)
class RankConfig:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    top_n: int = DEFAULT_TOP_N
    window: int = DEFAULT_WINDOW

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass
class ScoredInstance:
    instance: MaskedInstance
    scores: RankScores


def score_passage(instance: MaskedInstance, idf: IdfTable) -> float:
    """Sum tf*idf over the non-punctuation word tokens of the original passage."""
    words = instance.original_words()
    counts = Counter(w.lower() for w in words)
    return sum(counts[w.lower()] * idf.get(w) for w in words if not is_punct_token(w))


def score_mask(instance: MaskedInstance, idf: IdfTable) -> float:
    """Sum tf*idf over the masked span's words, tf counted in the passage."""
    words = instance.original_words()
    counts = Counter(w.lower() for w in words)
    return sum(counts[w.lower()] * idf.get(w) for w in instance.span_words())


def _bag(words: Sequence[str]) -> Counter[str]:
    return Counter(
        w.lower() for w in words if w != MASK_TOKEN and not is_punct_token(w)
    )


def _masked_sentence_bag(instance: MaskedInstance) -> Counter[str]:
    """Words of the sentence containing the mask, mask itself excluded."""
    words = instance.p_mask_words
    lo = instance.mask_index
    while lo > 0 and words[lo - 1] not in _SENTENCE_END:
        lo -= 1
    hi = instance.mask_index
    while hi < len(words) - 1 and words[hi] not in _SENTENCE_END:
        hi += 1
    return _bag(words[lo : hi + 1])


def _window_bag(words: Sequence[str], start: int, end: int, window: int) -> Counter[str]:
    """Up to ``window`` words on each side of [start, end], the span excluded."""
    left = words[max(0, start - window) : start]
    right = words[end + 1 : end + 1 + window]
    return _bag(list(left) + list(right))


def _cosine(a: Counter[str], b: Counter[str], idf: IdfTable) -> float:
    if not a or not b:
        return 0.0
    dot = sum(a[w] * idf.get(w) * b[w] * idf.get(w) for w in a.keys() & b.keys())
    norm_a = math.sqrt(sum((c * idf.get(w)) ** 2 for w, c in a.items()))
    norm_b = math.sqrt(sum((c * idf.get(w)) ** 2 for w, c in b.items()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


def score_answer_occurrences(
    instance: MaskedInstance, idf: IdfTable, window: int = DEFAULT_WINDOW
) -> tuple[float, tuple[int, int]]:
    """Best tf-idf cosine between the masked sentence and each occurrence window.

    Returns the maximum similarity and the occurrence that achieves it
    (earliest wins ties); that occurrence is the gold pointing target.
    """
    if not instance.answer_occurrences:
        raise ValueError(f"{instance.passage_id}: no answer occurrences to score")
    sentence = _masked_sentence_bag(instance)
    best_sim = -1.0
    best_occ = instance.answer_occurrences[0]
    for occ in instance.answer_occurrences:
        sim = _cosine(sentence, _window_bag(instance.p_mask_words, occ[0], occ[1], window), idf)
        if sim > best_sim:
            best_sim, best_occ = sim, occ
    return best_sim, best_occ


def combine(score_pass: float, score_mask_: float, score_ans: float, config: RankConfig) -> float:
    return score_pass + config.alpha * score_mask_ + config.beta * score_ans


def score_instance(instance: MaskedInstance, idf: IdfTable, config: RankConfig) -> ScoredInstance:
    """Compute all three scores and set the instance's gold occurrence."""
    s_pass = score_passage(instance, idf)
    s_mask = score_mask(instance, idf)
    s_ans, gold = score_answer_occurrences(instance, idf, config.window)
    instance.gold = gold
    total = combine(s_pass, s_mask, s_ans, config)
    return ScoredInstance(
        instance=instance,
        scores=RankScores(score_pass=s_pass, score_mask=s_mask, score_ans=s_ans, total=total),
    )


def rank_and_select(scored: Sequence[ScoredInstance], top_n: int) -> list[ScoredInstance]:
    """Sort by total descending (ties by passage id) and keep the top_n."""
    ordered = sorted(scored, key=lambda s: (-s.scores.total, s.instance.passage_id))
    return list(ordered[:top_n])


def rank_dataset(
    instances: Sequence[MaskedInstance], idf: IdfTable, config: RankConfig
) -> list[ScoredInstance]:
    return rank_and_select([score_instance(i, idf, config) for i in instances], config.top_n)


def save_ranked(scored: Sequence[ScoredInstance], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for item in scored:
            rec = instance_to_record(item.instance)
            rec["scores"] = {
                "pass": item.scores.score_pass,
                "mask": item.scores.score_mask,
                "ans": item.scores.score_ans,
                "total": item.scores.total,
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_ranked(path: str | Path) -> list[ScoredInstance]:
    out: list[ScoredInstance] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        scores = rec.get("scores", {})
        out.append(
            ScoredInstance(
                instance=instance_from_record(rec),
                scores=RankScores(
                    score_pass=float(scores.get("pass", 0.0)),
                    score_mask=float(scores.get("mask", 0.0)),
                    score_ans=float(scores.get("ans", 0.0)),
                    total=float(scores.get("total", 0.0)),
                ),
            )
        )
    return out


def load_rank_config(path: str | Path) -> RankConfig:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return RankConfig(
        alpha=float(obj.get("alpha", DEFAULT_ALPHA)),
        beta=float(obj.get("beta", DEFAULT_BETA)),
        top_n=int(obj.get("top_n", DEFAULT_TOP_N)),
        window=int(obj.get("window", DEFAULT_WINDOW)),
    )
