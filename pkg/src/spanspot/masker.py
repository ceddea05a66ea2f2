"""Masked-span dataset generation.

Finds short spans that repeat inside a passage, masks the final occurrence
with a single mask token, and records the surviving occurrences as the
pointing targets the model must recover.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import MASK_TOKEN, SPECIAL_TOKENS, IdfTable, Passage, is_punct_token
from .stopwords import STOPWORDS

MIN_SPAN_FREQ = 2
MAX_SPAN_FREQ = 4
MAX_SPAN_WORDS = 5


class MaskingError(Exception):
    """Raised on internal consistency violations while building instances."""


@dataclass(frozen=True)
class CandidateSpan:
    """A repeating span eligible for masking.

    Occurrences are inclusive word-index ranges, in passage order, counted
    greedily left to right without overlap.
    """

    words: tuple[str, ...]
    occurrences: tuple[tuple[int, int], ...]

    @property
    def frequency(self) -> int:
        return len(self.occurrences)

    @property
    def first_start(self) -> int:
        return self.occurrences[0][0]


@dataclass
class MaskedInstance:
    """A passage with one span occurrence replaced by a single mask token.

    ``answer_occurrences`` are the surviving occurrences of the masked span,
    as inclusive word-index ranges into ``p_mask_words``. ``gold`` is set by
    the ranker (or by supervised construction). ``question_start``, when set,
    marks where a rewritten-question segment begins inside ``p_mask_words``;
    self-supervised instances leave it None (the whole word list is passage).
    """

    passage_id: str
    p_mask_words: list[str]
    mask_index: int
    s_answer: str
    answer_occurrences: list[tuple[int, int]]
    gold: tuple[int, int] | None = None
    question_start: int | None = None

    def span_words(self) -> list[str]:
        return self.s_answer.split(" ")

    def original_words(self) -> list[str]:
        """Reconstruct the unmasked word list (self-supervised instances only)."""
        if self.question_start is not None:
            raise MaskingError("original_words is undefined for question-bearing instances")
        return (
            self.p_mask_words[: self.mask_index]
            + self.span_words()
            + self.p_mask_words[self.mask_index + 1 :]
        )


@dataclass(frozen=True)
class MaskSummary:
    n_passages: int
    n_instances: int
    n_skipped: int


def find_candidate_spans(
    passage: Passage, stopwords: frozenset[str] = STOPWORDS
) -> list[CandidateSpan]:
    """Enumerate maskable spans of a passage.

    A span is 1..5 consecutive words, none of them punctuation or stopwords,
    whose exact surface form occurs 2..4 times (greedy non-overlapping,
    case-sensitive). Returned in (length, first occurrence) order.
    """
    words = [w.text for w in passage.words]
    eligible = [
        not w.is_punct and w.text not in SPECIAL_TOKENS and w.text.lower() not in stopwords
        for w in passage.words
    ]
    starts_by_span: dict[tuple[str, ...], list[int]] = {}
    n_words = len(words)
    for n in range(1, MAX_SPAN_WORDS + 1):
        for i in range(n_words - n + 1):
            if all(eligible[i : i + n]):
                starts_by_span.setdefault(tuple(words[i : i + n]), []).append(i)

    out: list[CandidateSpan] = []
    for span_words, starts in starts_by_span.items():
        n = len(span_words)
        occ: list[tuple[int, int]] = []
        last_end = -1
        for s in starts:
            if s > last_end:
                occ.append((s, s + n - 1))
                last_end = s + n - 1
        if MIN_SPAN_FREQ <= len(occ) <= MAX_SPAN_FREQ:
            out.append(CandidateSpan(words=span_words, occurrences=tuple(occ)))
    return out


def select_informative_span(
    candidates: Sequence[CandidateSpan],
    idf: IdfTable,
    word_counts: Mapping[str, int] | None = None,
) -> CandidateSpan | None:
    """Pick the candidate whose words carry the largest total tf*idf weight.

    ``word_counts`` maps lowercased passage words to their in-passage counts
    (the tf term); without it every word counts once. Ties go to the longer
    span, then the earlier first occurrence.
    """
    best: CandidateSpan | None = None
    best_key: tuple[float, int, int] | None = None
    for cand in candidates:
        weight = 0.0
        for w in cand.words:
            tf = word_counts.get(w.lower(), 1) if word_counts is not None else 1
            weight += tf * idf.get(w)
        key = (weight, len(cand.words), -cand.first_start)
        if best_key is None or key > best_key:
            best, best_key = cand, key
    return best


def build_masked_instance(passage: Passage, span: CandidateSpan) -> MaskedInstance:
    """Mask the last occurrence of ``span`` in ``passage``."""
    words = passage.word_texts()
    for s, e in span.occurrences:
        if tuple(words[s : e + 1]) != span.words:
            raise MaskingError(
                f"span {span.words!r} not found at words[{s}:{e + 1}] of passage {passage.id}"
            )
    last_start, last_end = span.occurrences[-1]
    p_mask = words[:last_start] + [MASK_TOKEN] + words[last_end + 1 :]
    instance = MaskedInstance(
        passage_id=passage.id,
        p_mask_words=p_mask,
        mask_index=last_start,
        s_answer=" ".join(span.words),
        answer_occurrences=[occ for occ in span.occurrences[:-1]],
    )
    validate_instance(instance)
    return instance


def validate_instance(instance: MaskedInstance) -> None:
    """Check the structural invariants of a masked instance; raise on failure."""
    words = instance.p_mask_words
    mi = instance.mask_index
    if sum(1 for w in words if w == MASK_TOKEN) != 1:
        raise MaskingError(f"{instance.passage_id}: expected exactly one {MASK_TOKEN}")
    if not (0 <= mi < len(words)) or words[mi] != MASK_TOKEN:
        raise MaskingError(f"{instance.passage_id}: mask_index {mi} does not point at the mask")
    span = instance.span_words()
    for s, e in instance.answer_occurrences:
        if not (0 <= s <= e < len(words)):
            raise MaskingError(f"{instance.passage_id}: occurrence ({s},{e}) out of range")
        if words[s : e + 1] != span:
            raise MaskingError(f"{instance.passage_id}: occurrence ({s},{e}) does not match span")
        if s <= mi <= e:
            raise MaskingError(f"{instance.passage_id}: occurrence ({s},{e}) covers the mask")
        if instance.question_start is None and e >= mi:
            raise MaskingError(
                f"{instance.passage_id}: occurrence ({s},{e}) does not end before the mask"
            )


def generate_dataset(
    corpus: Sequence[Passage],
    stopwords: frozenset[str] = STOPWORDS,
    idf: IdfTable | None = None,
) -> tuple[list[MaskedInstance], MaskSummary]:
    """Emit at most one masked instance per passage.

    Passages without an eligible span are skipped and counted in the summary.
    ``idf`` drives the choice among multiple candidates; it should be computed
    over the same corpus.
    """
    if idf is None:
        from .corpus import compute_idf

        idf = compute_idf(corpus) if corpus else IdfTable(idf={}, n_passages=0)
    instances: list[MaskedInstance] = []
    skipped = 0
    for passage in corpus:
        candidates = find_candidate_spans(passage, stopwords)
        counts = Counter(w.text.lower() for w in passage.words)
        span = select_informative_span(candidates, idf, counts)
        if span is None:
            skipped += 1
            continue
        instances.append(build_masked_instance(passage, span))
    return instances, MaskSummary(
        n_passages=len(corpus), n_instances=len(instances), n_skipped=skipped
    )


def instance_to_record(instance: MaskedInstance) -> dict:
    rec = {
        "passage_id": instance.passage_id,
        "p_mask": list(instance.p_mask_words),
        "mask_index": instance.mask_index,
        "s_answer": instance.s_answer,
        "occurrences": [[s, e] for s, e in instance.answer_occurrences],
    }
    if instance.gold is not None:
        rec["gold"] = [instance.gold[0], instance.gold[1]]
    return rec


def instance_from_record(rec: dict) -> MaskedInstance:
    gold = tuple(rec["gold"]) if "gold" in rec and rec["gold"] is not None else None
    instance = MaskedInstance(
        passage_id=str(rec["passage_id"]),
        p_mask_words=[str(w) for w in rec["p_mask"]],
        mask_index=int(rec["mask_index"]),
        s_answer=str(rec["s_answer"]),
        answer_occurrences=[(int(s), int(e)) for s, e in rec["occurrences"]],
        gold=gold,  # type: ignore[arg-type]
    )
    validate_instance(instance)
    return instance


def save_dataset(instances: Sequence[MaskedInstance], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps(instance_to_record(inst), sort_keys=True) + "\n")


def load_dataset(path: str | Path) -> list[MaskedInstance]:
    out: list[MaskedInstance] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(instance_from_record(json.loads(line)))
    return out
