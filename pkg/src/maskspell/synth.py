"""Synthetic hypothesis source.

Corrupts gold references with controlled substitution/insertion/deletion
rates, attaches confidences whose informativeness is a single calibration
knob, and emits acoustic evidence of controllable fidelity.  Also provides
a seeded Markov-chain language so the whole pipeline runs without audio
or an external recognizer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .core import (
    AcousticEvidence,
    CorpusFormatError,
    Hypothesis,
    NBestList,
    ReferenceUtterance,
    Vocabulary,
    seeded_rng,
)


@dataclass(frozen=True)
class BetaParams:
    """A Beta(a, b) draw rescaled onto [lo, hi]."""

    a: float
    b: float
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if self.a <= 0 or self.b <= 0:
            raise ValueError("Beta shape parameters must be positive")
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise ValueError("Beta support must satisfy 0 <= lo < hi <= 1")

    def draw(self, rng) -> float:
        return self.lo + (self.hi - self.lo) * rng.betavariate(self.a, self.b)

    def blend_toward(self, other: "BetaParams", weight: float) -> "BetaParams":
        """Linear parameter interpolation; weight 1 keeps self, 0 gives other."""
        w = weight
        return BetaParams(
            a=other.a + (self.a - other.a) * w,
            b=other.b + (self.b - other.b) * w,
            lo=other.lo + (self.lo - other.lo) * w,
            hi=other.hi + (self.hi - other.hi) * w,
        )


CORRECT_CONF_DEFAULT = BetaParams(8.0, 2.0)
ERROR_CONF_DEFAULT = BetaParams(2.0, 8.0)
NEUTRAL_CONF_DEFAULT = BetaParams(2.0, 2.0)


@dataclass(frozen=True)
class CorruptionConfig:
    """Knobs of the synthetic first pass.

    ``calibration`` 1 means confidences cleanly separate erroneous from
    correct tokens; 0 collapses both confidence generators onto the same
    neutral distribution.  ``acoustic_fidelity`` mixes a one-hot on the
    true token with uniform noise.
    """

    sub_rate: float
    ins_rate: float
    del_rate: float
    calibration: float = 1.0
    acoustic_fidelity: float = 1.0
    nbest_depth: int = 1
    seed: int = 0
    correct_conf: BetaParams = CORRECT_CONF_DEFAULT
    error_conf: BetaParams = ERROR_CONF_DEFAULT
    neutral_conf: BetaParams = NEUTRAL_CONF_DEFAULT

    def __post_init__(self) -> None:
        for name in ("sub_rate", "ins_rate", "del_rate"):
            rate = getattr(self, name)
            if not (0.0 <= rate < 1.0):
                raise ValueError(f"{name} {rate} outside [0, 1)")
        if self.sub_rate + self.ins_rate + self.del_rate >= 1.0:
            raise ValueError("sub_rate + ins_rate + del_rate must be < 1")
        if not (0.0 <= self.calibration <= 1.0):
            raise ValueError("calibration outside [0, 1]")
        if not (0.0 <= self.acoustic_fidelity <= 1.0):
            raise ValueError("acoustic_fidelity outside [0, 1]")
        if self.nbest_depth < 1:
            raise ValueError("nbest_depth must be >= 1")


@dataclass(frozen=True)
class AppliedCounts:
    """How many edits the generator actually applied."""

    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0


@dataclass(frozen=True)
class CorruptionResult:
    hypothesis: Hypothesis
    evidence: AcousticEvidence
    error_flags: tuple[bool, ...]
    true_tokens: tuple[int | None, ...]
    applied: AppliedCounts


@dataclass(frozen=True)
class TruthRecord:
    """Sidecar ground truth for one synthesized utterance (per hypothesis)."""

    utterance_id: str
    acoustic_fidelity: float
    error_flags: tuple[tuple[bool, ...], ...]
    true_tokens: tuple[tuple[int | None, ...], ...]
    applied: tuple[AppliedCounts, ...]


def _random_regular(rng, vocab: Vocabulary) -> int:
    return 2 + rng.randrange(len(vocab) - 2)


def _random_wrong(rng, vocab: Vocabulary, true_id: int) -> int:
    n_regular = len(vocab) - 2
    if n_regular < 2:
        raise ValueError("substitution needs at least two regular tokens")
    pick = 2 + rng.randrange(n_regular - 1)
    return pick + 1 if pick >= true_id else pick


def corrupt_reference(
    reference: Sequence[int],
    cfg: CorruptionConfig,
    rng,
    vocab: Vocabulary,
    utterance_id: str = "",
) -> CorruptionResult:
    """Corrupt one reference into a hypothesis with confidences and evidence.

    Per reference position: substitute with ``sub_rate`` (uniform wrong
    token) or delete with ``del_rate``; every gap, ends included, inserts
    a uniform token with ``ins_rate``.  Erroneous tokens draw confidence
    from the error generator, correct ones from the correct generator.
    Inserted positions have no true token and get uniform evidence.
    """
    if not reference:
        raise ValueError("cannot corrupt an empty reference")
    correct_conf = cfg.correct_conf.blend_toward(cfg.neutral_conf, cfg.calibration)
    error_conf = cfg.error_conf.blend_toward(cfg.neutral_conf, cfg.calibration)

    tokens: list[int] = []
    confidences: list[float] = []
    flags: list[bool] = []
    trues: list[int | None] = []
    subs = ins = dels = 0

    def emit(token: int, erroneous: bool, true_token: int | None) -> None:
        tokens.append(token)
        confidences.append((error_conf if erroneous else correct_conf).draw(rng))
        flags.append(erroneous)
        trues.append(true_token)

    for true_token in reference:
        if cfg.ins_rate and rng.random() < cfg.ins_rate:
            emit(_random_regular(rng, vocab), True, None)
            ins += 1
        u = rng.random()
        if u < cfg.sub_rate:
            emit(_random_wrong(rng, vocab, true_token), True, true_token)
            subs += 1
        elif u < cfg.sub_rate + cfg.del_rate:
            dels += 1
        else:
            emit(true_token, False, true_token)
    if cfg.ins_rate and rng.random() < cfg.ins_rate:
        emit(_random_regular(rng, vocab), True, None)
        ins += 1

    score = sum(math.log(max(c, 1e-300)) for c in confidences)
    hypothesis = Hypothesis(
        tokens=tuple(tokens),
        confidences=tuple(confidences),
        transducer_score=score,
        utterance_id=utterance_id,
    )
    evidence = AcousticEvidence.from_truth(trues, len(vocab), cfg.acoustic_fidelity)
    return CorruptionResult(
        hypothesis=hypothesis,
        evidence=evidence,
        error_flags=tuple(flags),
        true_tokens=tuple(trues),
        applied=AppliedCounts(subs, ins, dels),
    )


def build_corpus(
    references: Sequence[ReferenceUtterance],
    cfg: CorruptionConfig,
    vocab: Vocabulary,
) -> tuple[list[NBestList], list[TruthRecord]]:
    """Corrupt every reference ``nbest_depth`` times, best-scoring first.

    The per-hypothesis random streams derive from (seed, utterance id,
    hypothesis index), so output does not depend on iteration order.
    """
    if not references:
        raise ValueError("no references to corrupt")
    corpus: list[NBestList] = []
    truths: list[TruthRecord] = []
    for ref in references:
        results = [
            corrupt_reference(
                ref.tokens,
                cfg,
                seeded_rng(cfg.seed, "corrupt", ref.utterance_id, k),
                vocab,
                utterance_id=ref.utterance_id,
            )
            for k in range(cfg.nbest_depth)
        ]
        order = sorted(range(len(results)), key=lambda k: (-results[k].hypothesis.transducer_score, k))
        ordered = [results[k] for k in order]
        corpus.append(
            NBestList(
                utterance_id=ref.utterance_id,
                audio_seconds=ref.audio_seconds,
                hypotheses=tuple(r.hypothesis for r in ordered),
                reference=ref.tokens,
            )
        )
        truths.append(
            TruthRecord(
                utterance_id=ref.utterance_id,
                acoustic_fidelity=cfg.acoustic_fidelity,
                error_flags=tuple(r.error_flags for r in ordered),
                true_tokens=tuple(r.true_tokens for r in ordered),
                applied=tuple(r.applied for r in ordered),
            )
        )
    return corpus, truths


def save_truth(records: Sequence[TruthRecord], path: str | Path, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            payload = {
                "id": rec.utterance_id,
                "acoustic_fidelity": rec.acoustic_fidelity,
                "error_flags": [list(f) for f in rec.error_flags],
                "true_tokens": [
                    [None if t is None else vocab.surface_of(t) for t in hyp] for hyp in rec.true_tokens
                ],
                "applied": [
                    {"S": a.substitutions, "I": a.insertions, "D": a.deletions} for a in rec.applied
                ],
            }
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")


def load_truth(path: str | Path, vocab: Vocabulary) -> list[TruthRecord]:
    records: list[TruthRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                records.append(
                    TruthRecord(
                        utterance_id=str(payload["id"]),
                        acoustic_fidelity=float(payload["acoustic_fidelity"]),
                        error_flags=tuple(tuple(bool(x) for x in f) for f in payload["error_flags"]),
                        true_tokens=tuple(
                            tuple(None if t is None else vocab.id_of(t) for t in hyp)
                            for hyp in payload["true_tokens"]
                        ),
                        applied=tuple(
                            AppliedCounts(int(a["S"]), int(a["I"]), int(a["D"]))
                            for a in payload["applied"]
                        ),
                    )
                )
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"line {lineno}: malformed JSON ({e.msg})") from None
            except (KeyError, TypeError, ValueError) as e:
                raise CorpusFormatError(f"line {lineno}: {e}") from None
    return records


# -- synthetic language ------------------------------------------------------

_CONSONANTS = "bcdfghjklmnprstvwz"
_VOWELS = "aeiou"


def _syllables() -> list[str]:
    base = [c + v for c in _CONSONANTS for v in _VOWELS]
    extra = [_CONSONANTS[i] + _VOWELS[i % 5] + "n" for i in range(10)]
    return base + extra  # 100 distinct syllables


class SyntheticLanguage:
    """A seeded token language: multi-token words, order-2 word transitions.

    Words are 2-3 tokens: a boundary-marked head plus continuations, so
    token- and word-level masking genuinely differ.  Sentences follow a
    sparse order-2 Markov chain over words, giving the scorers learnable
    bigram/trigram structure.
    """

    def __init__(self, seed: int = 0, num_words: int = 80):
        syllables = _syllables()
        surfaces = ["<mask>", "<del>"]
        surfaces += ["▁" + s for s in syllables]
        surfaces += syllables
        self.vocab = Vocabulary(surfaces)
        n_syll = len(syllables)

        rng = seeded_rng(seed, "words")
        words: list[tuple[int, ...]] = []
        seen: set[tuple[int, ...]] = set()
        while len(words) < num_words:
            length = rng.randint(2, 3)
            head = 2 + rng.randrange(n_syll)
            conts = tuple(2 + n_syll + rng.randrange(n_syll) for _ in range(length - 1))
            word = (head,) + conts
            if word not in seen:
                seen.add(word)
                words.append(word)
        self.words = tuple(words)

        rng = seeded_rng(seed, "transitions")
        weights = (0.45, 0.75, 0.90, 1.0)
        self.transitions: dict[tuple[int, int], tuple[tuple[int, ...], tuple[float, ...]]] = {}
        for i in range(num_words):
            for j in range(num_words):
                cands = tuple(rng.sample(range(num_words), 4))
                self.transitions[(i, j)] = (cands, weights)

    def _next_word(self, prev2: int, prev1: int, rng) -> int:
        cands, cum = self.transitions[(prev2, prev1)]
        x = rng.random()
        for cand, bound in zip(cands, cum):
            if x < bound:
                return cand
        return cands[-1]

    def generate_references(
        self,
        count: int,
        seed: int = 0,
        min_words: int = 5,
        max_words: int = 9,
        seconds_per_token: float = 0.15,
        base_seconds: float = 0.25,
    ) -> list[ReferenceUtterance]:
        refs: list[ReferenceUtterance] = []
        n_words = len(self.words)
        for u in range(count):
            rng = seeded_rng(seed, "ref", u)
            n = rng.randint(min_words, max_words)
            word_ids = [rng.randrange(n_words)]
            if n > 1:
                word_ids.append(rng.randrange(n_words))
            while len(word_ids) < n:
                word_ids.append(self._next_word(word_ids[-2], word_ids[-1], rng))
            tokens = tuple(tok for w in word_ids for tok in self.words[w])
            refs.append(
                ReferenceUtterance(
                    utterance_id=f"utt{u:05d}",
                    audio_seconds=round(base_seconds + seconds_per_token * len(tokens), 3),
                    tokens=tokens,
                )
            )
        return refs
