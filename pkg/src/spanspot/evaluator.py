"""Extractive-QA metrics: answer normalization, exact match, token F1.

Normalization lowercases, strips punctuation, drops the articles a/an/the,
and collapses whitespace. F1 is token-multiset overlap; both metrics take the
maximum over the reference answers. Dataset-level evaluation also breaks
results down by how often the (first) gold answer occurs in the passage.
"""

from __future__ import annotations

import json
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

_PUNCT = frozenset(string.punctuation)
_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")

FREQUENCY_COUNTING_RULE = (
    "case-insensitive whole-phrase occurrences of the first gold answer in the raw "
    "passage text; zero-occurrence answers fall into bucket 1"
)
_BUCKET_LABELS = ("1", "2", "3", ">=4")


class EvalFormatError(Exception):
    """Raised when an evaluation input file violates its schema."""


@dataclass(frozen=True)
class EvalExample:
    question_id: str
    passage: str
    question: str
    gold_answers: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.gold_answers:
            raise EvalFormatError(f"example {self.question_id} has no gold answers")


@dataclass
class EvalResult:
    em: float
    f1: float
    total: int
    per_question: dict[str, dict[str, float]]
    frequency_buckets: dict[str, dict[str, float]]
    missing_predictions: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "em": self.em,
            "f1": self.f1,
            "total": self.total,
            "per_question": self.per_question,
            "frequency_buckets": self.frequency_buckets,
            "missing_predictions": self.missing_predictions,
            "frequency_counting": FREQUENCY_COUNTING_RULE,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def normalize_answer(s: str) -> str:
    """Lowercase, remove punctuation and articles, collapse whitespace."""
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLE_RE.sub(" ", s)
    return " ".join(s.split())


def exact_match(prediction: str, golds: Sequence[str]) -> int:
    """1 iff the normalized prediction equals any normalized gold."""
    norm_pred = normalize_answer(prediction)
    return int(any(norm_pred == normalize_answer(g) for g in golds))


def _f1_single(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1_score(prediction: str, golds: Sequence[str]) -> float:
    """Token-multiset F1, maximum over the reference answers."""
    return max(_f1_single(prediction, g) for g in golds)


def _phrase_occurrences(passage: str, phrase: str) -> int:
    phrase = phrase.strip().lower()
    if not phrase:
        return 0
    pattern = re.compile(r"(?<!\w)" + re.escape(phrase) + r"(?!\w)")
    return len(pattern.findall(passage.lower()))


def _bucket_label(freq: int) -> str:
    if freq <= 1:
        return "1"
    if freq >= 4:
        return ">=4"
    return str(freq)


def evaluate(examples: Sequence[EvalExample], predictions: Mapping[str, str]) -> EvalResult:
    """Aggregate EM/F1 over a dataset, with answer-frequency buckets.

    Missing predictions count as empty strings and are flagged in the result.
    """
    ids = [ex.question_id for ex in examples]
    if len(set(ids)) != len(ids):
        raise EvalFormatError("duplicate question ids in dataset")

    per_question: dict[str, dict[str, float]] = {}
    missing: list[str] = []
    bucket_rows: dict[str, list[tuple[float, float]]] = {label: [] for label in _BUCKET_LABELS}

    for ex in examples:
        if ex.question_id in predictions:
            pred = predictions[ex.question_id]
        else:
            pred = ""
            missing.append(ex.question_id)
        em = float(exact_match(pred, ex.gold_answers))
        f1 = f1_score(pred, ex.gold_answers)
        per_question[ex.question_id] = {"em": em, "f1": f1}
        label = _bucket_label(_phrase_occurrences(ex.passage, ex.gold_answers[0]))
        bucket_rows[label].append((em, f1))

    n = len(examples)
    agg_em = 100.0 * sum(v["em"] for v in per_question.values()) / n if n else 0.0
    agg_f1 = 100.0 * sum(v["f1"] for v in per_question.values()) / n if n else 0.0
    buckets = {}
    for label in _BUCKET_LABELS:
        rows = bucket_rows[label]
        count = len(rows)
        buckets[label] = {
            "count": float(count),
            "em": 100.0 * sum(r[0] for r in rows) / count if count else 0.0,
            "f1": 100.0 * sum(r[1] for r in rows) / count if count else 0.0,
        }
    return EvalResult(
        em=agg_em,
        f1=agg_f1,
        total=n,
        per_question=per_question,
        frequency_buckets=buckets,
        missing_predictions=sorted(missing),
    )


def load_squad_format(path: str | Path) -> list[EvalExample]:
    """Load a SQuAD v1.1 JSON file into evaluation examples."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise EvalFormatError(f"cannot parse {path}: {exc}") from exc

    if not isinstance(obj, dict) or not isinstance(obj.get("data"), list):
        raise EvalFormatError(f'{path}: top level must be an object with a "data" list')

    examples: list[EvalExample] = []
    for ai, article in enumerate(obj["data"]):
        where = f"data[{ai}]"
        if not isinstance(article, dict) or not isinstance(article.get("paragraphs"), list):
            raise EvalFormatError(f'{path}: {where} must carry a "paragraphs" list')
        for pi, para in enumerate(article["paragraphs"]):
            where_p = f"{where}.paragraphs[{pi}]"
            if not isinstance(para, dict) or "context" not in para:
                raise EvalFormatError(f'{path}: {where_p} missing "context"')
            if not isinstance(para.get("qas"), list):
                raise EvalFormatError(f'{path}: {where_p} must carry a "qas" list')
            for qi, qa in enumerate(para["qas"]):
                where_q = f"{where_p}.qas[{qi}]"
                if not isinstance(qa, dict) or "id" not in qa or "question" not in qa:
                    raise EvalFormatError(f'{path}: {where_q} missing "id" or "question"')
                answers = qa.get("answers")
                if not isinstance(answers, list) or not answers:
                    raise EvalFormatError(f'{path}: {where_q} missing non-empty "answers"')
                golds = []
                for xi, ans in enumerate(answers):
                    if not isinstance(ans, dict) or "text" not in ans:
                        raise EvalFormatError(
                            f'{path}: {where_q}.answers[{xi}] missing "text"'
                        )
                    golds.append(str(ans["text"]))
                examples.append(
                    EvalExample(
                        question_id=str(qa["id"]),
                        passage=str(para["context"]),
                        question=str(qa["question"]),
                        gold_answers=tuple(golds),
                    )
                )
    return examples


def load_predictions(path: str | Path) -> dict[str, str]:
    """Load a predictions JSON map, rejecting duplicate question ids."""

    def _no_dups(pairs: list[tuple[str, object]]) -> dict[str, str]:
        out: dict[str, str] = {}
        for k, v in pairs:
            if k in out:
                raise EvalFormatError(f"duplicate prediction id {k!r}")
            out[k] = str(v)
        return out

    raw = Path(path).read_text(encoding="utf-8")
    obj = json.loads(raw, object_pairs_hook=_no_dups)
    if not isinstance(obj, dict):
        raise EvalFormatError(f"{path}: predictions must be a JSON object")
    return obj
