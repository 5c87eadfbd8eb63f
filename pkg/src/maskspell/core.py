"""Domain types, vocabulary, and corpus serialization.

Everything here is immutable after construction and safe to share
read-only across parallel workers.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_BOUNDARY_MARKER = "▁"  # word-initial prefix, sentence-piece style


class CorpusFormatError(ValueError):
    """A corpus, vocabulary, or sidecar file violates the expected schema."""


def seeded_rng(seed: int, *parts: object) -> random.Random:
    """Derive an independent random stream from a base seed and context parts.

    The derivation is a stable hash, so streams do not depend on Python's
    per-process hash randomization or on iteration order.
    """
    text = "\x1f".join([str(int(seed)), *(str(p) for p in parts)])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "big"))


class Vocabulary:
    """Token inventory with dense ids and a word-boundary convention.

    Id 0 is the mask placeholder and id 1 the deletion symbol; all other
    ids are regular tokens.  A surface starting with ``boundary_marker``
    begins a new word (the first token of an utterance always does).
    """

    MASK_ID = 0
    DEL_ID = 1

    def __init__(self, surfaces: Sequence[str], boundary_marker: str = DEFAULT_BOUNDARY_MARKER):
        surfaces = tuple(surfaces)
        if len(surfaces) < 2:
            raise CorpusFormatError("vocabulary needs at least the mask and delete surfaces")
        if len(set(surfaces)) != len(surfaces):
            seen: set[str] = set()
            for s in surfaces:
                if s in seen:
                    raise CorpusFormatError(f"duplicate vocabulary surface: {s!r}")
                seen.add(s)
        if not boundary_marker:
            raise CorpusFormatError("boundary marker must be a nonempty string")
        self._surfaces = surfaces
        self._ids = {s: i for i, s in enumerate(surfaces)}
        self.boundary_marker = boundary_marker
        self._word_start = tuple(s.startswith(boundary_marker) for s in surfaces)

    def __len__(self) -> int:
        return len(self._surfaces)

    def __contains__(self, surface: str) -> bool:
        return surface in self._ids

    @property
    def surfaces(self) -> tuple[str, ...]:
        return self._surfaces

    @property
    def mask_id(self) -> int:
        return self.MASK_ID

    @property
    def del_id(self) -> int:
        return self.DEL_ID

    @property
    def regular_ids(self) -> range:
        """Ids of ordinary tokens (everything except mask/delete)."""
        return range(2, len(self._surfaces))

    def id_of(self, surface: str) -> int:
        try:
            return self._ids[surface]
        except KeyError:
            raise CorpusFormatError(f"unknown token surface: {surface!r}") from None

    def surface_of(self, token_id: int) -> str:
        return self._surfaces[token_id]

    def ids_of(self, surfaces: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.id_of(s) for s in surfaces)

    def surfaces_of(self, ids: Iterable[int]) -> tuple[str, ...]:
        return tuple(self._surfaces[i] for i in ids)

    def is_word_start(self, token_id: int) -> bool:
        return self._word_start[token_id]

    def word_spans(self, tokens: Sequence[int]) -> list[tuple[int, int]]:
        """Half-open [start, end) spans grouping tokens into words."""
        spans: list[tuple[int, int]] = []
        start = 0
        for j in range(1, len(tokens)):
            if self._word_start[tokens[j]]:
                spans.append((start, j))
                start = j
        if tokens:
            spans.append((start, len(tokens)))
        return spans

    def words_of(self, tokens: Sequence[int]) -> list[tuple[int, ...]]:
        return [tuple(tokens[a:b]) for a, b in self.word_spans(tokens)]

    def sha256(self) -> str:
        payload = "\n".join(self._surfaces) + "\n#" + self.boundary_marker
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_file(cls, path: str | Path, boundary_marker: str = DEFAULT_BOUNDARY_MARKER) -> "Vocabulary":
        """Load a plain-text vocabulary: one surface per line, line number = id.

        The first two lines must be the mask and delete surfaces.
        """
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if len(lines) < 2:
            raise CorpusFormatError(f"{path}: vocabulary must list mask and delete surfaces first")
        return cls(lines, boundary_marker=boundary_marker)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self._surfaces) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class Hypothesis:
    """A first-pass token sequence with per-token confidences.

    ``transducer_score`` is the log-domain score the first pass assigned
    to the whole sequence; confidences live in [0, 1].
    """

    tokens: tuple[int, ...]
    confidences: tuple[float, ...]
    transducer_score: float
    utterance_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "confidences", tuple(float(c) for c in self.confidences))
        if len(self.tokens) != len(self.confidences):
            raise ValueError(
                f"hypothesis has {len(self.tokens)} tokens but {len(self.confidences)} confidences"
            )
        for c in self.confidences:
            if not (0.0 <= c <= 1.0) or math.isnan(c):
                raise ValueError(f"confidence {c} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class NBestList:
    """First-pass hypotheses for one utterance, best first."""

    utterance_id: str
    audio_seconds: float
    hypotheses: tuple[Hypothesis, ...]
    reference: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))
        if self.reference is not None:
            object.__setattr__(self, "reference", tuple(self.reference))
        if not self.hypotheses:
            raise ValueError(f"utterance {self.utterance_id!r}: empty n-best list")
        if self.audio_seconds < 0:
            raise ValueError(f"utterance {self.utterance_id!r}: negative audio_seconds")
        scores = [h.transducer_score for h in self.hypotheses]
        if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
            raise ValueError(f"utterance {self.utterance_id!r}: hypotheses not sorted by score")


@dataclass(frozen=True)
class MaskSolution:
    """Boolean vector over hypothesis positions; True = reconstruct this token."""

    flags: tuple[bool, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "flags", tuple(bool(f) for f in self.flags))

    def __len__(self) -> int:
        return len(self.flags)

    def __iter__(self):
        return iter(self.flags)

    def __getitem__(self, j: int) -> bool:
        return self.flags[j]

    @property
    def cardinality(self) -> int:
        return sum(self.flags)

    @classmethod
    def all_false(cls, length: int) -> "MaskSolution":
        return cls((False,) * length)


@dataclass(frozen=True)
class AcousticEvidence:
    """Per-position distribution over the vocabulary.

    Each position is a two-component mixture
    ``fidelity * one_hot(spike) + (1 - fidelity) * uniform``; a ``None``
    spike means the position is pure uniform.  This family is closed under
    everything the toolkit produces and keeps scoring O(1) per position;
    ``vector``/``dense`` materialize ordinary probability vectors.
    """

    vocab_size: int
    spikes: tuple[int | None, ...]
    fidelities: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "spikes", tuple(self.spikes))
        object.__setattr__(self, "fidelities", tuple(float(f) for f in self.fidelities))
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if len(self.spikes) != len(self.fidelities):
            raise ValueError("spikes and fidelities must have equal length")
        canonical = []
        for s, f in zip(self.spikes, self.fidelities):
            if not (0.0 <= f <= 1.0):
                raise ValueError(f"fidelity {f} outside [0, 1]")
            if s is None:
                canonical.append(0.0)
            else:
                if not (0 <= s < self.vocab_size):
                    raise ValueError(f"spike id {s} outside vocabulary")
                canonical.append(f)
        object.__setattr__(self, "fidelities", tuple(canonical))

    def __len__(self) -> int:
        return len(self.spikes)

    def vector(self, position: int) -> np.ndarray:
        s = self.spikes[position]
        f = self.fidelities[position]
        v = np.full(self.vocab_size, (1.0 - f) / self.vocab_size)
        if s is not None:
            v[s] += f
        return v

    def dense(self) -> np.ndarray:
        return np.stack([self.vector(t) for t in range(len(self))]) if len(self) else np.zeros((0, self.vocab_size))

    @classmethod
    def uniform(cls, length: int, vocab_size: int) -> "AcousticEvidence":
        return cls(vocab_size, (None,) * length, (0.0,) * length)

    @classmethod
    def from_truth(
        cls,
        true_tokens: Sequence[int | None],
        vocab_size: int,
        fidelity: float,
        missing_spike: int | None = None,
    ) -> "AcousticEvidence":
        """Evidence pointing at the true token per position.

        Positions whose true token is ``None`` (e.g. spurious insertions)
        get ``missing_spike`` instead — uniform by default, or a delete
        symbol for oracle-style evidence.
        """
        spikes = tuple(missing_spike if t is None else t for t in true_tokens)
        return cls(vocab_size, spikes, (fidelity,) * len(spikes))


@dataclass(frozen=True)
class ReferenceUtterance:
    """A gold utterance, the unit both synthesis and training consume."""

    utterance_id: str
    audio_seconds: float
    tokens: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError(f"utterance {self.utterance_id!r}: empty reference")


def _parse_line(line: str, lineno: int):
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"line {lineno}: malformed JSON ({e.msg})") from None
    if not isinstance(record, dict):
        raise CorpusFormatError(f"line {lineno}: record is not a JSON object")
    return record


def load_corpus(path: str | Path, vocab: Vocabulary) -> list[NBestList]:
    """Read an n-best corpus from JSON Lines.

    Token surfaces are resolved against ``vocab``.  Hypotheses that arrive
    out of score order are re-sorted with a warning.
    """
    corpus: list[NBestList] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = _parse_line(line, lineno)
            try:
                utt_id = str(record["id"])
                hyps = []
                for h in record["hyps"]:
                    hyps.append(
                        Hypothesis(
                            tokens=vocab.ids_of(h["tokens"]),
                            confidences=h["confidences"],
                            transducer_score=float(h["score"]),
                            utterance_id=utt_id,
                        )
                    )
                reference = None
                if record.get("reference") is not None:
                    reference = vocab.ids_of(record["reference"])
                scores = [h.transducer_score for h in hyps]
                if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
                    warnings.warn(f"{path}: line {lineno}: hypotheses out of score order, re-sorting")
                    hyps.sort(key=lambda h: -h.transducer_score)
                corpus.append(
                    NBestList(
                        utterance_id=utt_id,
                        audio_seconds=float(record["audio_seconds"]),
                        hypotheses=tuple(hyps),
                        reference=reference,
                    )
                )
            except CorpusFormatError as e:
                raise CorpusFormatError(f"line {lineno}: {e}") from None
            except (KeyError, TypeError, ValueError) as e:
                raise CorpusFormatError(f"line {lineno}: {e}") from None
    return corpus


def save_corpus(corpus: Sequence[NBestList], path: str | Path, vocab: Vocabulary) -> None:
    """Write a corpus as JSON Lines; ``load_corpus`` inverts this exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for utt in corpus:
            record: dict = {"id": utt.utterance_id, "audio_seconds": utt.audio_seconds}
            if utt.reference is not None:
                record["reference"] = list(vocab.surfaces_of(utt.reference))
            record["hyps"] = [
                {
                    "tokens": list(vocab.surfaces_of(h.tokens)),
                    "confidences": list(h.confidences),
                    "score": h.transducer_score,
                }
                for h in utt.hypotheses
            ]
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_references(path: str | Path, vocab: Vocabulary) -> list[ReferenceUtterance]:
    refs: list[ReferenceUtterance] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = _parse_line(line, lineno)
            try:
                refs.append(
                    ReferenceUtterance(
                        utterance_id=str(record["id"]),
                        audio_seconds=float(record["audio_seconds"]),
                        tokens=vocab.ids_of(record["tokens"]),
                    )
                )
            except CorpusFormatError as e:
                raise CorpusFormatError(f"line {lineno}: {e}") from None
            except (KeyError, TypeError, ValueError) as e:
                raise CorpusFormatError(f"line {lineno}: {e}") from None
    return refs


def save_references(refs: Sequence[ReferenceUtterance], path: str | Path, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ref in refs:
            record = {
                "id": ref.utterance_id,
                "audio_seconds": ref.audio_seconds,
                "tokens": list(vocab.surfaces_of(ref.tokens)),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
