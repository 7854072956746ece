"""Corpus ingestion: deterministic tokenization, sentence segmentation, vocabulary.

The on-disk corpus format is JSON Lines, UTF-8, one object per line:

    {"id": "optional-string", "document": "raw text", "summary": "raw text"}

Records without a usable document or summary are skipped with a warning so a
noisy corpus can be processed in one pass; structurally malformed lines (bad
JSON, wrong field types) abort with an error naming the line number.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

# Reserved vocabulary slots, fixed by convention everywhere in the toolkit.
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

SENTENCE_TERMINATORS = frozenset({".", "!", "?"})

# A token is a maximal run of word characters, or a single non-space
# punctuation character.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class CorpusError(Exception):
    """Raised for malformed corpus files."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split ``text`` into word and punctuation tokens.

    Punctuation characters become single-character tokens ("returned." ->
    ["returned", "."]). Deterministic; empty or whitespace-only input yields
    an empty list.
    """
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: Sequence[str]) -> str:
    """Join tokens with single spaces. tokenize(detokenize(t)) == list(t)."""
    return " ".join(tokens)


def segment_sentences(tokens: Sequence[str]) -> list[tuple[str, ...]]:
    """Split a token sequence into sentences after ``.``, ``!`` or ``?``.

    A trailing fragment without a terminator forms a final sentence. The
    output partitions the input: concatenating the sentences in order
    reproduces ``tokens`` exactly, and no sentence is empty.
    """
    sentences: list[tuple[str, ...]] = []
    current: list[str] = []
    for tok in tokens:
        current.append(tok)
        if tok in SENTENCE_TERMINATORS:
            sentences.append(tuple(current))
            current = []
    if current:
        sentences.append(tuple(current))
    return sentences


@dataclass(frozen=True)
class Document:
    """A source document with its sentence and token structure.

    Invariant: concatenating ``sentences`` in order equals ``tokens``, and
    every sentence is non-empty.
    """

    id: str
    raw_text: str
    sentences: tuple[tuple[str, ...], ...]
    tokens: tuple[str, ...]

    @classmethod
    def from_text(cls, doc_id: str, text: str) -> "Document":
        tokens = tuple(tokenize(text))
        sentences = tuple(segment_sentences(tokens))
        return cls(id=doc_id, raw_text=text, sentences=sentences, tokens=tokens)


@dataclass(frozen=True)
class Example:
    """A document paired with its (non-empty) reference summary."""

    document: Document
    summary: tuple[str, ...]
    summary_sentences: tuple[tuple[str, ...], ...]

    @classmethod
    def from_texts(cls, doc_id: str, document: str, summary: str) -> "Example":
        doc = Document.from_text(doc_id, document)
        summary_tokens = tuple(tokenize(summary))
        if not summary_tokens:
            raise ValueError(f"example {doc_id!r}: summary has no tokens")
        return cls(
            document=doc,
            summary=summary_tokens,
            summary_sentences=tuple(segment_sentences(summary_tokens)),
        )

    @property
    def id(self) -> str:
        return self.document.id


class Vocab:
    """Token <-> id bijection with fixed reserved ids.

    Ids 0..3 are PAD, BOS, EOS, UNK. Unknown tokens encode to UNK.
    """

    def __init__(self, tokens: Sequence[str]):
        for reserved in RESERVED_TOKENS:
            if reserved in tokens:
                raise ValueError(f"reserved token {reserved!r} in vocabulary list")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary list")
        self._id_to_token: tuple[str, ...] = RESERVED_TOKENS + tuple(tokens)
        self._token_to_id = {tok: i for i, tok in enumerate(self._id_to_token)}

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        return self._id_to_token[token_id]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        get = self._token_to_id.get
        return [get(tok, UNK_ID) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._id_to_token[i] for i in ids]

    def tokens(self) -> tuple[str, ...]:
        """Non-reserved tokens in id order (for serialization)."""
        return self._id_to_token[len(RESERVED_TOKENS):]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._id_to_token == other._id_to_token


def build_vocab(
    examples: Sequence[Example],
    min_freq: int = 1,
    extra_sequences: Iterable[Sequence[str]] = (),
) -> Vocab:
    """Build a vocabulary over document and summary tokens.

    Tokens occurring at least ``min_freq`` times get ids in descending
    frequency order, ties broken lexicographically; everything else maps to
    UNK. ``extra_sequences`` (e.g. rendered prompt token sequences) are
    counted alongside the corpus so control tokens receive ids.
    """
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")
    counts: Counter[str] = Counter()
    n_seen = 0
    for ex in examples:
        n_seen += 1
        counts.update(ex.document.tokens)
        counts.update(ex.summary)
    for seq in extra_sequences:
        counts.update(seq)
    if n_seen == 0 and not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_freq),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocab(kept)


def load_corpus(path) -> list[Example]:
    """Load a JSON Lines corpus, in file order.

    Records missing a non-empty ``document`` or ``summary`` are skipped and
    counted; the total skip count is logged at the end. Records with no id
    are assigned ``line-<n>`` from their 1-based line number. Structurally
    bad lines raise :class:`CorpusError` naming the line.
    """
    examples: list[Example] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"{path}: line {lineno}: record is not an object")
            doc_text = record.get("document")
            summary_text = record.get("summary")
            for field, value in (("document", doc_text), ("summary", summary_text)):
                if value is not None and not isinstance(value, str):
                    raise CorpusError(
                        f"{path}: line {lineno}: field {field!r} must be a string"
                    )
            ex_id = record.get("id") or f"line-{lineno}"
            if not doc_text or not tokenize(doc_text):
                log.warning("%s: line %d (%s): empty document, skipped", path, lineno, ex_id)
                skipped += 1
                continue
            if not summary_text or not tokenize(summary_text):
                log.warning("%s: line %d (%s): empty summary, skipped", path, lineno, ex_id)
                skipped += 1
                continue
            examples.append(Example.from_texts(ex_id, doc_text, summary_text))
    if skipped:
        log.warning("%s: skipped %d record(s) with empty fields", path, skipped)
    return examples


def save_corpus(examples: Sequence[Example], path) -> None:
    """Write examples back out as JSON Lines (raw text fields preserved)."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            record = {
                "id": ex.id,
                "document": ex.document.raw_text,
                "summary": detokenize(ex.summary),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
