"""Corpus ingestion: passage splitting, word tokenization, vocabulary and IDF.

The unit of everything downstream is the :class:`Passage`, a paragraph
tokenized into words with character offsets. Statistics (vocabulary counts,
document frequencies) are computed on lowercased word forms; surface forms
keep their original case.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
MASK_TOKEN = "[MASK]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN)

DEFAULT_MIN_PASSAGE_WORDS = 30

_PUNCT_CHARS = frozenset(string.punctuation)
_SPECIAL_RE = re.compile(r"\[(?:PAD|UNK|CLS|SEP|MASK)\]")
_CHUNK_RE = re.compile(r"\S+")
_PARAGRAPH_SPLIT_RE = re.compile(r"\n+")


class CorpusError(Exception):
    """Raised when a corpus file cannot be read or parsed."""


def is_punct_token(token: str) -> bool:
    """True for tokens made entirely of punctuation characters."""
    if not token or token in SPECIAL_TOKENS:
        return False
    return all(ch in _PUNCT_CHARS for ch in token)


@dataclass(frozen=True)
class Word:
    """A single token with character offsets into its source text."""

    text: str
    start: int
    end: int
    is_punct: bool


@dataclass(frozen=True)
class Passage:
    """A tokenized paragraph, the unit of masking and scoring."""

    id: str
    doc_id: str
    text: str
    words: tuple[Word, ...]

    def word_texts(self) -> list[str]:
        return [w.text for w in self.words]


def tokenize(text: str) -> list[Word]:
    """Split text into words with offsets.

    Whitespace separates chunks; leading and trailing punctuation characters
    of a chunk become single-character tokens of their own (interior
    punctuation such as hyphens stays attached). Bracketed special tokens
    like ``[MASK]`` are kept atomic wherever they appear.
    """
    words: list[Word] = []
    for chunk in _CHUNK_RE.finditer(text):
        _split_chunk(chunk.group(), chunk.start(), words)
    return words


def _split_chunk(chunk: str, offset: int, out: list[Word]) -> None:
    pos = 0
    for m in _SPECIAL_RE.finditer(chunk):
        if m.start() > pos:
            _split_plain(chunk[pos : m.start()], offset + pos, out)
        out.append(Word(m.group(), offset + m.start(), offset + m.end(), False))
        pos = m.end()
    if pos < len(chunk):
        _split_plain(chunk[pos:], offset + pos, out)


def _split_plain(seg: str, offset: int, out: list[Word]) -> None:
    i, j = 0, len(seg)
    lead: list[int] = []
    while i < j and seg[i] in _PUNCT_CHARS:
        lead.append(i)
        i += 1
    trail: list[int] = []
    while j > i and seg[j - 1] in _PUNCT_CHARS:
        trail.append(j - 1)
        j -= 1
    for p in lead:
        out.append(Word(seg[p], offset + p, offset + p + 1, True))
    if i < j:
        out.append(Word(seg[i:j], offset + i, offset + j, False))
    for p in reversed(trail):
        out.append(Word(seg[p], offset + p, offset + p + 1, True))


def load_corpus(path: str | Path, min_words: int = DEFAULT_MIN_PASSAGE_WORDS) -> list[Passage]:
    """Load a corpus file into passages.

    ``.jsonl`` files hold one document per line as ``{"doc_id": ..., "text": ...}``;
    any other file is UTF-8 plain text treated as a single document named after
    the file. Paragraphs are delimited by line breaks (blank lines included).
    Passages with fewer than ``min_words`` non-punctuation words are dropped.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    if path.suffix == ".jsonl":
        docs = _parse_jsonl_docs(raw, path)
    else:
        docs = [(path.stem, raw)]

    passages: list[Passage] = []
    for doc_id, text in docs:
        paragraphs = [p for p in _PARAGRAPH_SPLIT_RE.split(text.replace("\r", "\n")) if p.strip()]
        for k, para in enumerate(paragraphs):
            words = tokenize(para)
            if sum(1 for w in words if not w.is_punct) < min_words:
                continue
            passages.append(
                Passage(id=f"{doc_id}#p{k:04d}", doc_id=doc_id, text=para, words=tuple(words))
            )
    return passages


def _parse_jsonl_docs(raw: str, path: Path) -> list[tuple[str, str]]:
    docs: list[tuple[str, str]] = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: malformed JSONL at line {lineno}: {exc.msg}") from exc
        if not isinstance(obj, dict) or "doc_id" not in obj or "text" not in obj:
            raise CorpusError(
                f'{path}: line {lineno} must be an object with "doc_id" and "text" fields'
            )
        docs.append((str(obj["doc_id"]), str(obj["text"])))
    return docs


def save_passages(passages: Sequence[Passage], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for p in passages:
            f.write(json.dumps({"id": p.id, "doc_id": p.doc_id, "text": p.text}, sort_keys=True))
            f.write("\n")


def load_passages(path: str | Path) -> list[Passage]:
    """Load passages persisted by :func:`save_passages` (words re-tokenized)."""
    out: list[Passage] = []
    path = Path(path)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: malformed JSONL at line {lineno}: {exc.msg}") from exc
        out.append(
            Passage(
                id=str(obj["id"]),
                doc_id=str(obj["doc_id"]),
                text=str(obj["text"]),
                words=tuple(tokenize(str(obj["text"]))),
            )
        )
    return out


@dataclass
class Vocabulary:
    """Token-to-id map with the five special tokens at ids 0..4.

    Lookups lowercase regular tokens; special tokens match exactly.
    Treated as immutable once built.
    """

    token_to_id: dict[str, int]

    def __post_init__(self) -> None:
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise ValueError("vocabulary ids must be contiguous from 0")
        for tok in SPECIAL_TOKENS:
            if tok not in self.token_to_id:
                raise ValueError(f"vocabulary missing special token {tok}")

    def __len__(self) -> int:
        return len(self.token_to_id)

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD_TOKEN]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK_TOKEN]

    @property
    def cls_id(self) -> int:
        return self.token_to_id[CLS_TOKEN]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP_TOKEN]

    @property
    def mask_id(self) -> int:
        return self.token_to_id[MASK_TOKEN]

    def id_of(self, token: str) -> int:
        if token in SPECIAL_TOKENS:
            return self.token_to_id[token]
        return self.token_to_id.get(token.lower(), self.unk_id)

    def encode_words(self, tokens: Iterable[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def id_to_token(self) -> list[str]:
        out = [""] * len(self.token_to_id)
        for tok, i in self.token_to_id.items():
            out[i] = tok
        return out

    def content_hash(self) -> str:
        payload = "\n".join(self.id_to_token()).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.id_to_token()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(token_to_id={tok: i for i, tok in enumerate(lines)})


def build_vocabulary(corpus: Sequence[Passage], min_freq: int = 1) -> Vocabulary:
    """Build a vocabulary of lowercased words with frequency >= min_freq.

    Ordering is deterministic: the five specials first, then frequency
    descending, ties broken lexicographically.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter(w.text.lower() for p in corpus for w in p.words)
    reserved = {tok.lower() for tok in SPECIAL_TOKENS}
    kept = sorted(
        (t for t, c in counts.items() if c >= min_freq and t not in reserved),
        key=lambda t: (-counts[t], t),
    )
    token_to_id = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
    for tok in kept:
        token_to_id[tok] = len(token_to_id)
    return Vocabulary(token_to_id=token_to_id)


@dataclass
class IdfTable:
    """Smoothed inverse document frequencies over passages.

    idf(w) = ln((1 + n_passages) / (1 + df(w))) + 1. Words absent from the
    table get the df = 0 value (maximum rarity).
    """

    idf: dict[str, float]
    n_passages: int

    @property
    def default_idf(self) -> float:
        return math.log(1.0 + self.n_passages) + 1.0

    def get(self, word: str) -> float:
        return self.idf.get(word.lower(), self.default_idf)

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as f:
            f.write(json.dumps({"n_passages": self.n_passages}) + "\n")
            for word in sorted(self.idf):
                f.write(json.dumps({"word": word, "idf": self.idf[word]}, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "IdfTable":
        path = Path(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines:
            raise CorpusError(f"{path}: empty idf file")
        header = json.loads(lines[0])
        if "n_passages" not in header:
            raise CorpusError(f"{path}: first line must carry n_passages")
        idf: dict[str, float] = {}
        for line in lines[1:]:
            if not line.strip():
                continue
            obj = json.loads(line)
            idf[str(obj["word"])] = float(obj["idf"])
        return cls(idf=idf, n_passages=int(header["n_passages"]))


def compute_idf(corpus: Sequence[Passage]) -> IdfTable:
    """Document frequencies over lowercased words, one count per passage."""
    if not corpus:
        raise ValueError("compute_idf requires a non-empty corpus")
    n = len(corpus)
    df: Counter[str] = Counter()
    for p in corpus:
        df.update({w.text.lower() for w in p.words})
    idf = {w: math.log((1.0 + n) / (1.0 + c)) + 1.0 for w, c in df.items()}
    return IdfTable(idf=idf, n_passages=n)
