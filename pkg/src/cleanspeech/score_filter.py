"""Quantile-based pruning of low-confidence alignments.

Confidence scores are only comparable within a language, so utterances are
ranked per language and the lowest ceil(theta * n) are marked low by
nearest-rank, with ties resolved by (score, utterance_id) so reruns are
byte-stable. A recording containing any low utterance is discarded in full.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from cleanspeech.errors import MissingThreshold
from cleanspeech.resegment import AlignedUtterance

DEFAULT_THETA = 0.10


@dataclass(frozen=True)
class FilterConfig:
    theta_ctc: float = DEFAULT_THETA
    quantile_method: str = "nearest-rank"

    def validate(self) -> None:
        if not 0.0 <= self.theta_ctc <= 1.0:
            raise ValueError(f"theta_ctc {self.theta_ctc} outside [0, 1]")
        if self.quantile_method != "nearest-rank":
            raise ValueError("only nearest-rank quantiles are supported")


@dataclass(frozen=True)
class LanguageThreshold:
    language: str
    cutoff: float  # an observed score (nearest-rank), -inf when theta == 0
    sample_count: int
    low_count: int  # exactly ceil(theta * n); carried so ties stay resolvable


def _low_rank_count(theta: float, n: int) -> int:
    # guard against float spill (0.07 * 100 -> 7.000000000000001)
    return min(n, math.ceil(round(theta * n, 9)))


def compute_thresholds(
    utterances: list[AlignedUtterance], config: FilterConfig
) -> dict[str, LanguageThreshold]:
    """Nearest-rank cutoff per language: the score at ascending rank
    ceil(theta * n), 1-indexed; theta = 0 keeps everything (cutoff -inf)."""
    config.validate()
    by_language: dict[str, list[AlignedUtterance]] = {}
    for utt in utterances:
        by_language.setdefault(utt.language, []).append(utt)

    thresholds: dict[str, LanguageThreshold] = {}
    for language, group in by_language.items():
        n = len(group)
        k = _low_rank_count(config.theta_ctc, n)
        if k == 0:
            cutoff = -math.inf
        else:
            ordered = sorted(group, key=lambda u: (u.confidence.value, u.utterance_id))
            cutoff = ordered[k - 1].confidence.value
        thresholds[language] = LanguageThreshold(
            language=language, cutoff=cutoff, sample_count=n, low_count=k
        )
    return thresholds


def mark_low(
    utterances: list[AlignedUtterance], thresholds: dict[str, LanguageThreshold]
) -> set[str]:
    """Ids of the exactly-`low_count` lowest-ranked utterances per language."""
    by_language: dict[str, list[AlignedUtterance]] = {}
    for utt in utterances:
        if utt.language not in thresholds:
            raise MissingThreshold(utt.language)
        by_language.setdefault(utt.language, []).append(utt)

    low: set[str] = set()
    for language, group in by_language.items():
        k = thresholds[language].low_count
        if k:
            ordered = sorted(group, key=lambda u: (u.confidence.value, u.utterance_id))
            low.update(u.utterance_id for u in ordered[:k])
    return low


def filter_longforms(
    utterances: list[AlignedUtterance], thresholds: dict[str, LanguageThreshold]
) -> tuple[list[AlignedUtterance], list[str]]:
    """Discard every recording that contains at least one low utterance.

    Returns (kept utterances, discarded recording ids); kept utterances stay
    in input order.
    """
    low = mark_low(utterances, thresholds)
    discarded = sorted({u.recording_id for u in utterances if u.utterance_id in low})
    discarded_set = set(discarded)
    kept = [u for u in utterances if u.recording_id not in discarded_set]
    return kept, discarded
