"""From-scratch ROUGE-1 / ROUGE-2 / ROUGE-L scoring.

These scores drive both the convergence check in the optimization loop and
the final evaluation harness, so the implementation is deliberately
self-contained and deterministic:

* tokenization lowercases and splits on every maximal run of
  non-alphanumeric characters (Unicode classes, no stemming, no stop words);
* ROUGE-N uses clipped (multiset) n-gram overlap;
* ROUGE-L uses the longest common subsequence over the whole token
  sequences, without sentence splitting.

F1 values are computed directly from match counts, ``2*m / (|cand| + |ref|)``,
which is algebraically identical to ``2PR/(P+R)`` but avoids an avoidable
rounding step.
"""

from collections import Counter
from dataclasses import dataclass
from itertools import groupby

TokenSequence = list[str]


def tokenize(text: str) -> TokenSequence:
    """Lowercase ``text`` and split it on runs of non-alphanumeric characters.

    Deterministic and purely character-class based: "GPT-4o-mini rocks"
    becomes ["gpt", "4o", "mini", "rocks"].
    """
    return ["".join(run) for is_word, run in groupby(text.lower(), key=str.isalnum) if is_word]


@dataclass(frozen=True)
class MetricTriple:
    """Precision / recall / F1 for one ROUGE variant, each in [0, 1]."""

    precision: float
    recall: float
    f1: float

    @classmethod
    def zero(cls) -> "MetricTriple":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_counts(cls, matches: int, candidate_total: int, reference_total: int) -> "MetricTriple":
        if matches == 0 or candidate_total == 0 or reference_total == 0:
            return cls.zero()
        return cls(
            precision=matches / candidate_total,
            recall=matches / reference_total,
            f1=2 * matches / (candidate_total + reference_total),
        )


@dataclass(frozen=True)
class RougeScores:
    rouge1: MetricTriple
    rouge2: MetricTriple
    rougeL: MetricTriple


def _ngrams(tokens: TokenSequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: TokenSequence, reference: TokenSequence, n: int) -> MetricTriple:
    """Clipped n-gram overlap scores.

    Returns the all-zero triple when either side has fewer than ``n`` tokens.
    """
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    if len(candidate) < n or len(reference) < n:
        return MetricTriple.zero()
    cand_counts = _ngrams(candidate, n)
    ref_counts = _ngrams(reference, n)
    overlap = sum((cand_counts & ref_counts).values())
    return MetricTriple.from_counts(overlap, sum(cand_counts.values()), sum(ref_counts.values()))


def lcs_length(a: TokenSequence, b: TokenSequence) -> int:
    """Longest common subsequence length via two-row dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    curr = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                curr[j] = prev[j - 1] + 1
            else:
                curr[j] = prev[j] if prev[j] >= curr[j - 1] else curr[j - 1]
        prev, curr = curr, prev
    return prev[len(b)]


def rouge_l(candidate: TokenSequence, reference: TokenSequence) -> MetricTriple:
    """LCS-based scores over the whole sequences (no sentence splitting)."""
    lcs = lcs_length(candidate, reference)
    return MetricTriple.from_counts(lcs, len(candidate), len(reference))


def score_all(candidate: str, reference: str) -> RougeScores:
    """Tokenize both texts once and compute ROUGE-1, ROUGE-2, and ROUGE-L."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    return RougeScores(
        rouge1=rouge_n(cand, ref, 1),
        rouge2=rouge_n(cand, ref, 2),
        rougeL=rouge_l(cand, ref),
    )
