"""Control-signal extraction from document-summary pairs.

Five signals are extracted per example: a length bin, an abstractiveness bin,
the sentence count, keywords, and typed entities. All extraction is
deterministic, so re-annotating a corpus yields byte-identical output.

The extractive oracle greedily selects document sentences maximizing the mean
of ROUGE-1 and ROUGE-2 F1 against the summary, stopping at the first step
with no strict improvement. Abstractiveness is 100 * (1 - oracle score),
binned to multiples of 5. Keywords come from per-oracle-sentence longest
common subsequences with the summary, minus stop words and duplicates.
"""

from __future__ import annotations

import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .corpus import Document, Example, tokenize
from .rouge import rouge_n
from .stopwords import STOPWORDS

log = logging.getLogger(__name__)

BIN_WIDTH = 5
MAX_SAMPLED_CONTROLS = 5


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleSelection:
    """Greedily selected document-sentence indices (in document order) and
    the oracle score of their concatenation against the summary."""

    indices: tuple[int, ...]
    score: float


@dataclass(frozen=True)
class ControlSignals:
    """The five oracle control signals for one example."""

    length_bin: int
    abstractiveness_bin: int
    n_sentences: int
    keywords: tuple[str, ...]
    entities: tuple[tuple[str, tuple[str, ...]], ...]

    def to_dict(self) -> dict:
        return {
            "length_bin": self.length_bin,
            "abstractiveness": self.abstractiveness_bin,
            "n_sentences": self.n_sentences,
            "keywords": list(self.keywords),
            "entities": [[etype, " ".join(surface)] for etype, surface in self.entities],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControlSignals":
        return cls(
            length_bin=int(data["length_bin"]),
            abstractiveness_bin=int(data["abstractiveness"]),
            n_sentences=int(data["n_sentences"]),
            keywords=tuple(data["keywords"]),
            entities=tuple(
                (etype, tuple(surface.split())) for etype, surface in data["entities"]
            ),
        )


@dataclass(frozen=True)
class AnnotatedExample:
    example: Example
    signals: ControlSignals

    @property
    def id(self) -> str:
        return self.example.id


class TaggedSpan(NamedTuple):
    start: int
    label: str
    tokens: tuple[str, ...]


class EntityTagger(ABC):
    """Maps a token sequence to non-overlapping typed spans in textual order.

    Implementations must be deterministic. The default is a dictionary
    tagger; a statistical NER system can be plugged in behind this interface.
    """

    @abstractmethod
    def tag(self, tokens: Sequence[str]) -> list[TaggedSpan]:
        raise NotImplementedError


class DictionaryTagger(EntityTagger):
    """Longest-match lexicon tagger.

    Scans left to right; at each position the longest lexicon surface
    starting there wins and the scan resumes after it, so returned spans
    never overlap.
    """

    def __init__(self, lexicon: dict[tuple[str, ...], str]):
        for surface in lexicon:
            if not surface:
                raise ValueError("lexicon contains an empty surface")
        self._lexicon = dict(lexicon)
        self._max_len = max((len(s) for s in lexicon), default=0)

    @classmethod
    def from_file(cls, path) -> "DictionaryTagger":
        """Load a lexicon of ``surface<TAB>TYPE`` lines (UTF-8)."""
        lexicon: dict[tuple[str, ...], str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                if "\t" not in line:
                    raise ValueError(f"{path}: line {lineno}: expected 'surface<TAB>TYPE'")
                surface_text, etype = line.split("\t", 1)
                surface = tuple(tokenize(surface_text))
                if not surface or not etype.strip():
                    raise ValueError(f"{path}: line {lineno}: empty surface or type")
                lexicon[surface] = etype.strip()
        return cls(lexicon)

    def tag(self, tokens: Sequence[str]) -> list[TaggedSpan]:
        spans: list[TaggedSpan] = []
        i = 0
        n = len(tokens)
        while i < n:
            match_len = 0
            match_type = None
            for width in range(min(self._max_len, n - i), 0, -1):
                candidate = tuple(tokens[i : i + width])
                etype = self._lexicon.get(candidate)
                if etype is not None:
                    match_len, match_type = width, etype
                    break
            if match_type is not None:
                spans.append(TaggedSpan(i, match_type, tuple(tokens[i : i + match_len])))
                i += match_len
            else:
                i += 1
        return spans


# ---------------------------------------------------------------------------
# Oracle selection and numeric signals
# ---------------------------------------------------------------------------

def oracle_score(selected_tokens: Sequence[str], summary: Sequence[str]) -> float:
    """Mean of ROUGE-1 F1 and ROUGE-2 F1 of the selection vs. the summary."""
    if not selected_tokens:
        return 0.0
    r1 = rouge_n(selected_tokens, summary, 1).f1
    r2 = rouge_n(selected_tokens, summary, 2).f1
    return 0.5 * (r1 + r2)


def extractive_oracle(doc: Document, summary: Sequence[str]) -> OracleSelection:
    """Greedy extractive oracle.

    At each step, add the not-yet-selected sentence that maximizes the oracle
    score of the selection (concatenated in document order); stop when no
    candidate strictly improves the score. Ties go to the smallest sentence
    index. Summaries sharing nothing with the document select nothing.
    """
    if not summary:
        raise ValueError("extractive oracle requires a non-empty summary")
    if not doc.sentences:
        raise ValueError(f"document {doc.id!r} has no sentences")
    selected: list[int] = []
    best = 0.0
    remaining = list(range(len(doc.sentences)))
    while remaining:
        step_best = best
        step_idx = None
        for i in remaining:
            ordered = sorted(selected + [i])
            cand_tokens = [tok for j in ordered for tok in doc.sentences[j]]
            score = oracle_score(cand_tokens, summary)
            if score > step_best:
                step_best, step_idx = score, i
        if step_idx is None:
            break
        selected.append(step_idx)
        remaining.remove(step_idx)
        best = step_best
    return OracleSelection(indices=tuple(sorted(selected)), score=best)


def bin_value(value: float, width: int = BIN_WIDTH) -> int:
    """Largest multiple of ``width`` that is <= value."""
    return int(value // width) * width


def length_bin(summary: Sequence[str]) -> int:
    """Half-open length bin [l, l+5) of the summary token count."""
    if not summary:
        raise ValueError("cannot bin an empty summary")
    return bin_value(len(summary))


def abstractiveness_raw(doc: Document, summary: Sequence[str]) -> float:
    """Unbinned abstractiveness: 100 * (1 - extractive oracle score)."""
    return 100.0 * (1.0 - extractive_oracle(doc, summary).score)


def abstractiveness(doc: Document, summary: Sequence[str]) -> int:
    """Abstractiveness binned to a multiple of 5 in [0, 100]."""
    raw = abstractiveness_raw(doc, summary)
    return max(0, min(100, bin_value(raw)))


def count_sentences(summary_sentences: Sequence[Sequence[str]]) -> int:
    if not summary_sentences:
        raise ValueError("summary has no sentences")
    return len(summary_sentences)


# ---------------------------------------------------------------------------
# Keywords
# ---------------------------------------------------------------------------

def lcs_tokens(a: Sequence[str], b: Sequence[str]) -> list[str]:
    """One longest common subsequence of ``a`` and ``b``.

    Among all maximal subsequences, returns the one whose match positions in
    ``a`` are leftmost (then leftmost in ``b``), which makes extraction
    deterministic.
    """
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return []
    # suffix[i][j] = LCS length of a[i:], b[j:]
    suffix = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row = suffix[i]
        below = suffix[i + 1]
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]
    out: list[str] = []
    i = j = 0
    while suffix[i][j] > 0:
        if a[i] == b[j] and suffix[i][j] == suffix[i + 1][j + 1] + 1:
            out.append(a[i])
            i += 1
            j += 1
        elif suffix[i][j + 1] == suffix[i][j]:
            # a[i] may still match a later b position without losing length.
            j += 1
        else:
            i += 1
    return out


def extract_keywords(
    summary: Sequence[str],
    oracle_sentences: Sequence[Sequence[str]],
    stopwords: frozenset[str] = STOPWORDS,
) -> list[str]:
    """Keywords: per-oracle-sentence LCS tokens with the summary, collected
    in oracle-sentence order, minus stop words, deduplicated keeping the
    first occurrence."""
    collected: list[str] = []
    for sentence in oracle_sentences:
        collected.extend(lcs_tokens(sentence, summary))
    seen: set[str] = set()
    keywords: list[str] = []
    for tok in collected:
        if tok in stopwords or tok in seen:
            continue
        seen.add(tok)
        keywords.append(tok)
    return keywords


# ---------------------------------------------------------------------------
# Entities and subset sampling
# ---------------------------------------------------------------------------

def extract_entities(
    summary: Sequence[str], tagger: EntityTagger
) -> list[tuple[str, tuple[str, ...]]]:
    """Typed entity mentions in the summary, in textual order, with duplicate
    (type, surface) pairs removed keeping the first."""
    seen: set[tuple[str, tuple[str, ...]]] = set()
    entities: list[tuple[str, tuple[str, ...]]] = []
    for span in tagger.tag(summary):
        key = (span.label, span.tokens)
        if key in seen:
            continue
        seen.add(key)
        entities.append(key)
    return entities


def sample_control_subset(
    items: Sequence, rng: np.random.Generator, max_items: int = MAX_SAMPLED_CONTROLS
) -> list:
    """Sample a user-intent subset: n uniform in [1, min(max_items, |items|)],
    then n distinct items uniformly without replacement, in original order."""
    if not items:
        raise ValueError("cannot sample from an empty item list")
    upper = min(max_items, len(items))
    n = int(rng.integers(1, upper + 1))
    indices = sorted(rng.choice(len(items), size=n, replace=False).tolist())
    return [items[i] for i in indices]


# ---------------------------------------------------------------------------
# Corpus annotation
# ---------------------------------------------------------------------------

def annotate_example(
    example: Example,
    tagger: Optional[EntityTagger] = None,
    stopwords: frozenset[str] = STOPWORDS,
) -> ControlSignals:
    """Extract all five control signals for one example."""
    doc = example.document
    summary = example.summary
    selection = extractive_oracle(doc, summary)
    raw_abs = 100.0 * (1.0 - selection.score)
    oracle_sentences = [doc.sentences[i] for i in selection.indices]
    entities: list[tuple[str, tuple[str, ...]]] = []
    if tagger is not None:
        entities = extract_entities(summary, tagger)
    return ControlSignals(
        length_bin=length_bin(summary),
        abstractiveness_bin=max(0, min(100, bin_value(raw_abs))),
        n_sentences=count_sentences(example.summary_sentences),
        keywords=tuple(extract_keywords(summary, oracle_sentences, stopwords)),
        entities=tuple(entities),
    )


def annotate_corpus(
    examples: Sequence[Example],
    tagger: Optional[EntityTagger] = None,
    stopwords: frozenset[str] = STOPWORDS,
    threads: int = 1,
) -> list[AnnotatedExample]:
    """Annotate every example; output order matches input order.

    Extraction is independent per example, so with ``threads > 1`` examples
    are processed by a thread pool and merged back in input order.
    """
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            signal_list = list(
                pool.map(lambda ex: annotate_example(ex, tagger, stopwords), examples)
            )
    else:
        signal_list = [annotate_example(ex, tagger, stopwords) for ex in examples]
    return [AnnotatedExample(ex, sig) for ex, sig in zip(examples, signal_list)]


def signal_stats(annotated: Sequence[AnnotatedExample]) -> dict[str, float]:
    """Per-signal corpus averages (length in raw tokens, abstractiveness over
    bins, plus sentence, keyword and entity counts)."""
    if not annotated:
        raise ValueError("no annotated examples")
    n = len(annotated)
    return {
        "n_keywords": sum(len(a.signals.keywords) for a in annotated) / n,
        "n_entities": sum(len(a.signals.entities) for a in annotated) / n,
        "length": sum(len(a.example.summary) for a in annotated) / n,
        "abstractiveness": sum(a.signals.abstractiveness_bin for a in annotated) / n,
        "n_sentences": sum(a.signals.n_sentences for a in annotated) / n,
    }


def save_annotated(annotated: Sequence[AnnotatedExample], path) -> None:
    """Write the annotated corpus: each record extends the corpus record with
    a ``signals`` object."""
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotated:
            record = {
                "id": ann.id,
                "document": ann.example.document.raw_text,
                "summary": " ".join(ann.example.summary),
                "signals": ann.signals.to_dict(),
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_annotated(path) -> list[AnnotatedExample]:
    """Load an annotated corpus written by :func:`save_annotated`."""
    annotated: list[AnnotatedExample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            example = Example.from_texts(
                record.get("id") or f"line-{lineno}",
                record["document"],
                record["summary"],
            )
            annotated.append(
                AnnotatedExample(example, ControlSignals.from_dict(record["signals"]))
            )
    return annotated
