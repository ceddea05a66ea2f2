"""Turn masked instances into model-ready token sequences.

Self-supervised instances frame as ``[CLS] masked-passage [SEP]``; instances
carrying a question segment frame as ``[CLS] passage [SEP] question [SEP]``.
Candidate answer positions cover the passage words (never specials or the
mask). Gold spans shift with the framing offsets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import CLS_TOKEN, MASK_TOKEN, SEP_TOKEN, SPECIAL_TOKENS, Vocabulary
from ..masker import MaskedInstance


@dataclass
class FramedInstance:
    passage_id: str
    ids: np.ndarray  # (L,) int64
    mask_position: int
    candidate_mask: np.ndarray  # (L,) bool
    gold: tuple[int, int] | None


def frame_instance(instance: MaskedInstance, vocab: Vocabulary) -> FramedInstance:
    if instance.question_start is None:
        passage_words = instance.p_mask_words
        question_words: list[str] = []
        mask_in_passage = True
        local_mask = instance.mask_index
    else:
        qs = instance.question_start
        passage_words = instance.p_mask_words[:qs]
        question_words = instance.p_mask_words[qs:]
        mask_in_passage = False
        local_mask = instance.mask_index - qs
        if local_mask < 0 or question_words[local_mask] != MASK_TOKEN:
            raise ValueError(f"{instance.passage_id}: mask_index outside the question segment")

    tokens = [CLS_TOKEN] + list(passage_words) + [SEP_TOKEN]
    passage_offset = 1
    if question_words:
        question_offset = len(tokens)
        tokens += list(question_words) + [SEP_TOKEN]
        mask_position = question_offset + local_mask
    else:
        mask_position = passage_offset + local_mask

    ids = np.asarray(vocab.encode_words(tokens), dtype=np.int64)
    candidate = np.zeros(len(tokens), dtype=bool)
    for i, w in enumerate(passage_words):
        candidate[passage_offset + i] = w not in SPECIAL_TOKENS
    if mask_in_passage:
        candidate[mask_position] = False

    gold: tuple[int, int] | None = None
    if instance.gold is not None:
        gold = (instance.gold[0] + passage_offset, instance.gold[1] + passage_offset)

    return FramedInstance(
        passage_id=instance.passage_id,
        ids=ids,
        mask_position=mask_position,
        candidate_mask=candidate,
        gold=gold,
    )


def frame_window(
    window_words: list[str],
    question_words: list[str],
    vocab: Vocabulary,
) -> FramedInstance:
    """Frame an inference window: ``[CLS] window [SEP] question [SEP]``."""
    mask_positions = [i for i, w in enumerate(question_words) if w == MASK_TOKEN]
    if len(mask_positions) != 1:
        raise ValueError(
            f"question must contain exactly one {MASK_TOKEN}, found {len(mask_positions)}"
        )
    tokens = [CLS_TOKEN] + list(window_words) + [SEP_TOKEN] + list(question_words) + [SEP_TOKEN]
    ids = np.asarray(vocab.encode_words(tokens), dtype=np.int64)
    candidate = np.zeros(len(tokens), dtype=bool)
    for i, w in enumerate(window_words):
        candidate[1 + i] = w not in SPECIAL_TOKENS
    mask_position = 1 + len(window_words) + 1 + mask_positions[0]
    return FramedInstance(
        passage_id="window",
        ids=ids,
        mask_position=mask_position,
        candidate_mask=candidate,
        gold=None,
    )
