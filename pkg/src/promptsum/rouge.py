"""ROUGE-1/2/L from the standard definition: clipped n-gram overlap and LCS.

No stemming or stop-word removal is applied; F1 is the unweighted harmonic
mean. All functions are pure and safe to call from any number of threads.
"""

from __future__ import annotations

from collections import Counter
from typing import NamedTuple, Sequence, Union


class RougeScore(NamedTuple):
    precision: float
    recall: float
    f1: float


ZERO_SCORE = RougeScore(0.0, 0.0, 0.0)


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def ngram_counts(tokens: Sequence, n: int) -> Counter:
    """Multiset of n-grams of ``tokens`` as a Counter of tuples."""
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence, reference: Sequence, n: int = 1) -> RougeScore:
    """ROUGE-N with clipped (multiset) n-gram overlap.

    overlap = sum over distinct n-grams of min(count in candidate, count in
    reference); precision = overlap / #candidate n-grams, recall = overlap /
    #reference n-grams. Zero denominators yield zero scores.
    """
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    cand_counts = ngram_counts(candidate, n)
    ref_counts = ngram_counts(reference, n)
    n_cand = sum(cand_counts.values())
    n_ref = sum(ref_counts.values())
    if n_cand == 0 or n_ref == 0:
        return ZERO_SCORE
    # Iterate the smaller multiset; min() clips repeated n-grams.
    smaller = cand_counts if len(cand_counts) <= len(ref_counts) else ref_counts
    overlap = sum(min(cand_counts[g], ref_counts[g]) for g in smaller)
    precision = overlap / n_cand
    recall = overlap / n_ref
    return RougeScore(precision, recall, _f1(precision, recall))


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Length of the longest common subsequence, O(len(a) * len(b))."""
    if not a or not b:
        return 0
    # Rolling single-row DP keeps memory linear in len(b).
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = max(prev[j], row[j - 1])
        prev = row
    return prev[-1]


def rouge_l(candidate: Sequence, reference: Sequence) -> RougeScore:
    """ROUGE-L: precision = LCS/|candidate|, recall = LCS/|reference|."""
    if not candidate or not reference:
        return ZERO_SCORE
    lcs = lcs_length(candidate, reference)
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return RougeScore(precision, recall, _f1(precision, recall))


def limited_length_recall(
    candidate: Sequence, reference: Sequence, n_or_l: Union[int, str]
) -> RougeScore:
    """ROUGE with the candidate truncated to the reference length first.

    ``n_or_l`` selects the metric: an integer n for ROUGE-N, or "l" for
    ROUGE-L. The recall field is the conventionally reported value.
    """
    truncated = candidate[: len(reference)]
    if isinstance(n_or_l, str):
        if n_or_l.lower() != "l":
            raise ValueError(f"metric selector must be an int or 'l', got {n_or_l!r}")
        return rouge_l(truncated, reference)
    return rouge_n(truncated, reference, n_or_l)
