"""Confidence-threshold masking and the mask-sampling decoder input.

Deterministic threshold masking flags every token whose confidence falls
below the threshold.  Mask sampling hedges against miscalibrated
confidences: each low-confidence token is masked only with some
probability, so several plausible mask solutions are explored instead of
one brittle one.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .core import Hypothesis, MaskSolution, Vocabulary

GRANULARITIES = ("token", "word")


@dataclass(frozen=True)
class MaskConfig:
    threshold: float = 0.95
    granularity: str = "token"
    num_samples: int = 10
    sample_prob: float = 0.5
    include_baseline: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError(f"threshold {self.threshold} outside [0, 1]")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if not (0.0 <= self.sample_prob <= 1.0):
            raise ValueError(f"sample_prob {self.sample_prob} outside [0, 1]")


def threshold_mask(hyp: Hypothesis, threshold: float) -> MaskSolution:
    """Flag every position whose confidence is strictly below the threshold."""
    return MaskSolution(tuple(c < threshold for c in hyp.confidences))


def expand_to_words(mask: MaskSolution, tokens: Sequence[int], vocab: Vocabulary) -> MaskSolution:
    """Widen a mask so whole words are masked together.

    If any token of a boundary-marked word is flagged, every token of that
    word becomes flagged.  Idempotent.
    """
    if len(mask) != len(tokens):
        raise ValueError(f"mask length {len(mask)} != token length {len(tokens)}")
    flags = list(mask.flags)
    for a, b in vocab.word_spans(tokens):
        if any(flags[a:b]):
            flags[a:b] = [True] * (b - a)
    return MaskSolution(tuple(flags))


def draw_mask(
    confidences: Sequence[float], threshold: float, sample_prob: float, rng: random.Random
) -> MaskSolution:
    """One raw sampling draw: high-confidence positions stay False,
    low-confidence positions are independently True with ``sample_prob``."""
    return MaskSolution(_draw_flags(confidences, threshold, sample_prob, rng))


def _draw_flags(confidences, threshold, sample_prob, rng) -> tuple[bool, ...]:
    rand = rng.random
    return tuple(c < threshold and rand() < sample_prob for c in confidences)


def sample_mask_solutions(
    hyp: Hypothesis,
    cfg: MaskConfig,
    rng: random.Random,
    vocab: Vocabulary | None = None,
) -> list[MaskSolution]:
    """Sample distinct mask solutions for one hypothesis.

    With ``include_baseline`` the deterministic threshold mask is always
    the first solution and counts toward ``num_samples``, so a
    single-sample config degenerates to plain threshold masking.  Random
    draws are deduplicated; up to ``10 * num_samples`` attempts are made
    before giving up on filling the list.  Word granularity widens every
    solution to whole words (which requires ``vocab``).
    """
    word = cfg.granularity == "word"
    if word and vocab is None:
        raise ValueError("word granularity requires a vocabulary")

    def finalize(flags: tuple[bool, ...]) -> tuple[bool, ...]:
        if word:
            return expand_to_words(MaskSolution(flags), hyp.tokens, vocab).flags
        return flags

    accepted: list[tuple[bool, ...]] = []
    seen: set[tuple[bool, ...]] = set()
    if cfg.include_baseline:
        base = finalize(tuple(c < cfg.threshold for c in hyp.confidences))
        accepted.append(base)
        seen.add(base)
    confidences = hyp.confidences
    for _ in range(10 * cfg.num_samples):
        if len(accepted) >= cfg.num_samples:
            break
        drawn = finalize(_draw_flags(confidences, cfg.threshold, cfg.sample_prob, rng))
        if drawn not in seen:
            accepted.append(drawn)
            seen.add(drawn)
    return [MaskSolution(flags) for flags in accepted]
