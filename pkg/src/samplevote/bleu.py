"""Sentence-level BLEU used as the similarity between open-ended samples."""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass

_PUNCT = set(string.punctuation)


@dataclass(frozen=True)
class BleuParams:
    max_ngram_order: int = 4
    smoothing_epsilon: float = 0.1

    def __post_init__(self) -> None:
        if self.max_ngram_order < 1:
            raise ValueError("max_ngram_order must be >= 1")
        if self.smoothing_epsilon <= 0:
            raise ValueError("smoothing_epsilon must be > 0")


def tokenize(text: str) -> list[str]:
    """Split on whitespace after giving every punctuation character its own token."""
    spaced = "".join(f" {ch} " if ch in _PUNCT else ch for ch in text)
    return spaced.split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_tokens(cand: list[str], ref: list[str], params: BleuParams = BleuParams()) -> float:
    if not cand or not ref:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(1, params.max_ngram_order + 1):
        cand_counts = _ngrams(cand, n)
        total = sum(cand_counts.values())
        if total == 0:
            # candidate shorter than n: order drops out, remaining weights renormalize
            break
        ref_counts = _ngrams(ref, n)
        matched = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        p_n = matched / total if matched else params.smoothing_epsilon / total
        log_sum += math.log(p_n)
        orders += 1
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    return min(1.0, bp * math.exp(log_sum / orders))


def sentence_bleu(candidate: str, reference: str, params: BleuParams = BleuParams()) -> float:
    return bleu_tokens(tokenize(candidate), tokenize(reference), params)
