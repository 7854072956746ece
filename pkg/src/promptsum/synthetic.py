"""Deterministic synthetic corpora for experiments and verification.

Two generators:

* :func:`news_corpus` builds noisy document/summary pairs whose summaries
  copy spans from the document (so oracle extraction, abstractiveness and
  keywords behave like they do on news data) with a planted mean summary
  length and entities drawn from :func:`news_lexicon`.
* :func:`copy_task_corpus` builds the controllable toy task: the gold
  summary is the first k tokens of the document with k varying, which makes
  summary length the one attribute a model must learn to control.
"""

from __future__ import annotations

import numpy as np

from .corpus import Example, detokenize

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _word_list(n_words: int, word_seed: int = 7, min_syllables: int = 2) -> list[str]:
    """Pronounceable pseudo-words, fixed independent of corpus seeds."""
    rng = np.random.default_rng(word_seed)
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < n_words:
        n_syll = int(rng.integers(min_syllables, min_syllables + 2))
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(n_syll)
        )
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def news_lexicon() -> dict[tuple[str, ...], str]:
    """A small multi-token entity lexicon for the synthetic news corpus."""
    people = _word_list(8, word_seed=11)
    orgs = _word_list(8, word_seed=13)
    places = _word_list(8, word_seed=17)
    lexicon: dict[tuple[str, ...], str] = {}
    for i in range(0, 8, 2):
        lexicon[(people[i], people[i + 1])] = "PERSON"
        lexicon[(orgs[i], orgs[i + 1])] = "ORG"
        lexicon[(places[i],)] = "LOC"
    return lexicon


def write_lexicon(lexicon: dict[tuple[str, ...], str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for surface, etype in lexicon.items():
            fh.write(f"{' '.join(surface)}\t{etype}\n")


def news_corpus(
    n_examples: int,
    seed: int = 0,
    mean_summary_len: int = 60,
    len_spread: int = 10,
    n_doc_sentences: tuple[int, int] = (6, 10),
    copy_prob: float = 0.8,
) -> list[Example]:
    """Synthetic news-like corpus with a planted mean summary length.

    Summary lengths are uniform over [mean - spread, mean + spread], so the
    corpus mean converges to ``mean_summary_len``. Summaries are assembled
    from spans of the document sentences (probability ``copy_prob``) mixed
    with novel tokens, and entity surfaces appear in documents and summaries.
    """
    rng = np.random.default_rng(seed)
    content = _word_list(120)
    entity_surfaces = list(news_lexicon().keys())
    examples: list[Example] = []
    for idx in range(n_examples):
        sentences: list[list[str]] = []
        for _ in range(int(rng.integers(n_doc_sentences[0], n_doc_sentences[1] + 1))):
            length = int(rng.integers(8, 19))
            sent = [content[rng.integers(len(content))] for _ in range(length)]
            if rng.random() < 0.5:
                surface = entity_surfaces[rng.integers(len(entity_surfaces))]
                pos = int(rng.integers(0, len(sent)))
                sent[pos : pos + len(surface)] = list(surface)
            sent.append(".")
            sentences.append(sent)
        doc_tokens = [tok for sent in sentences for tok in sent]

        target_len = int(mean_summary_len + rng.integers(-len_spread, len_spread + 1))
        summary: list[str] = []
        while len(summary) < target_len:
            if rng.random() < copy_prob:
                sent = sentences[rng.integers(len(sentences))]
                start = int(rng.integers(0, max(1, len(sent) - 3)))
                width = int(rng.integers(3, 8))
                span = [tok for tok in sent[start : start + width] if tok != "."]
                summary.extend(span)
            else:
                summary.append(content[rng.integers(len(content))])
            if len(summary) >= 12 and rng.random() < 0.12 and summary[-1] != ".":
                summary.append(".")
        summary = summary[:target_len]
        summary[-1] = "."

        examples.append(
            Example.from_texts(
                f"news-{idx}", detokenize(doc_tokens), detokenize(summary)
            )
        )
    return examples


def copy_task_corpus(
    n_examples: int,
    seed: int = 0,
    doc_len: tuple[int, int] = (30, 80),
    summary_len: tuple[int, int] = (8, 34),
    n_word_types: int = 25,
) -> list[Example]:
    """Controllable toy task: gold summary = first k document tokens.

    Documents are unpunctuated streams of pseudo-words; k is uniform over
    ``summary_len``, so the summary length bin is the control signal a model
    trained on this corpus has to obey.
    """
    rng = np.random.default_rng(seed)
    words = _word_list(n_word_types)
    examples: list[Example] = []
    for idx in range(n_examples):
        m = int(rng.integers(doc_len[0], doc_len[1] + 1))
        k = int(rng.integers(summary_len[0], summary_len[1] + 1))
        k = min(k, m)
        doc_tokens = [words[rng.integers(len(words))] for _ in range(m)]
        examples.append(
            Example.from_texts(
                f"copy-{idx}", detokenize(doc_tokens), detokenize(doc_tokens[:k])
            )
        )
    return examples
