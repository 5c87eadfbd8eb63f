"""Masked-language-model and external-LM scorers.

``CountMlm`` is a count-based masked language model: the distribution for
a masked position mixes smoothed (left, right) neighbor-context counts
with the acoustic evidence at that position, in the log domain.  It is
small enough to train in seconds yet keeps the structure that matters:
bidirectional context plus per-position acoustic conditioning.

``NgramLm`` is an add-k smoothed n-gram language model used to select
among corrected candidates.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import AcousticEvidence, MaskSolution, Vocabulary, seeded_rng

BOS = -1
EOS = -2

NEG_INF = float("-inf")


class CheckpointError(ValueError):
    """A scorer checkpoint is malformed or does not match the vocabulary."""


@dataclass(frozen=True)
class TrainingExample:
    """A masked training instance.

    ``input_tokens`` is the visible sequence (masks and possibly inserted
    noise tokens); ``target_tokens`` holds the gold token per position,
    with the delete symbol at inserted positions.  Unmasked positions have
    input == target.
    """

    input_tokens: tuple[int, ...]
    target_tokens: tuple[int, ...]
    mask_flags: tuple[bool, ...]
    source_len: int

    def __post_init__(self) -> None:
        if not (len(self.input_tokens) == len(self.target_tokens) == len(self.mask_flags)):
            raise ValueError("training example fields must have equal length")
        for inp, tgt, flag in zip(self.input_tokens, self.target_tokens, self.mask_flags):
            if not flag and inp != tgt:
                raise ValueError("unmasked positions must carry their target token")


def max_masked_count(length: int, max_mask_frac: float) -> int:
    """Masking budget: at most this fraction of the utterance, but never zero."""
    return max(1, int(max_mask_frac * length))


def make_training_example(
    reference: Sequence[int], max_mask_frac: float, rng, mask_id: int = Vocabulary.MASK_ID
) -> TrainingExample:
    """Mask m positions of a gold utterance, m uniform in {1..budget}."""
    length = len(reference)
    if length == 0:
        raise ValueError("cannot make a training example from an empty reference")
    m = rng.randint(1, max_masked_count(length, max_mask_frac))
    positions = set(rng.sample(range(length), m))
    inputs = tuple(mask_id if t in positions else tok for t, tok in enumerate(reference))
    flags = tuple(t in positions for t in range(length))
    return TrainingExample(inputs, tuple(reference), flags, length)


def simulate_insertions(
    example: TrainingExample, ins_prob: float, rng, vocab: Vocabulary
) -> TrainingExample:
    """Insert random noise tokens whose reconstruction target is the delete symbol.

    Each of the len+1 gaps (both ends included) receives an insertion with
    probability ``ins_prob``.  Inserted positions are flagged masked so the
    model learns to map them to deletion.
    """
    if ins_prob == 0.0:
        return example
    regular = vocab.regular_ids
    inputs: list[int] = []
    targets: list[int] = []
    flags: list[bool] = []
    for gap in range(len(example.input_tokens) + 1):
        if rng.random() < ins_prob:
            inputs.append(regular[rng.randrange(len(regular))])
            targets.append(vocab.DEL_ID)
            flags.append(True)
        if gap < len(example.input_tokens):
            inputs.append(example.input_tokens[gap])
            targets.append(example.target_tokens[gap])
            flags.append(example.mask_flags[gap])
    return TrainingExample(tuple(inputs), tuple(targets), tuple(flags), example.source_len)


def _neighbor_context(tokens: Sequence[int], flags: Sequence[bool], t: int):
    """Visible left/right neighbors of position t; None when the neighbor is masked."""
    if t == 0:
        left = BOS
    else:
        left = tokens[t - 1] if not flags[t - 1] else None
    if t == len(tokens) - 1:
        right = EOS
    else:
        right = tokens[t + 1] if not flags[t + 1] else None
    return left, right


class MlmScorer(ABC):
    """Fill-and-score contract for masked-language-model implementations."""

    vocab_size: int
    mask_id: int = Vocabulary.MASK_ID

    @abstractmethod
    def position_log_probs(
        self, tokens: Sequence[int], flags: Sequence[bool], evidence: AcousticEvidence
    ) -> dict[int, np.ndarray]:
        """Normalized log distribution over the vocabulary for every masked
        position, conditioned on the visible tokens and the acoustic
        evidence at that position.  The mask placeholder has -inf mass."""

    def fill_decisions(
        self, tokens: Sequence[int], flags: Sequence[bool], evidence: AcousticEvidence
    ) -> dict[int, tuple[int, float]]:
        """(chosen token, its log probability) per masked position."""
        out = {}
        for t, row in self.position_log_probs(tokens, flags, evidence).items():
            choice = int(np.argmax(row))
            out[t] = (choice, float(row[choice]))
        return out

    def log_distributions(
        self, tokens: Sequence[int], flags: Sequence[bool], evidence: AcousticEvidence
    ) -> np.ndarray:
        """(length, vocab) array usable with ``mlm_loss``; unmasked rows are
        a point mass on the visible token."""
        rows = np.full((len(tokens), self.vocab_size), NEG_INF)
        for t, tok in enumerate(tokens):
            if not flags[t]:
                rows[t, tok] = 0.0
        for t, row in self.position_log_probs(tokens, flags, evidence).items():
            rows[t] = row
        return rows


class UniformMlm(MlmScorer):
    """Maximally ignorant scorer: uniform over every non-mask token."""

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size

    def position_log_probs(self, tokens, flags, evidence):
        row = np.full(self.vocab_size, -math.log(self.vocab_size - 1))
        row[self.mask_id] = NEG_INF
        out = {}
        for t, flagged in enumerate(flags):
            if flagged:
                out[t] = row.copy()
        return out


class CountMlm(MlmScorer):
    """Count-based acoustic-aware masked LM.

    The context distribution for a masked position backs off through
    (left, right) pair counts, then single-side counts, then the center
    marginal — a side is unusable when that neighbor is masked or the
    counts are empty.  The acoustic evidence enters as
    ``acoustic_weight * log evidence`` added to the context log-probs,
    renormalized.
    """

    def __init__(
        self,
        vocab_size: int,
        acoustic_weight: float = 0.1,
        smoothing_k: float = 0.5,
        vocab_sha256: str = "",
        meta: dict | None = None,
    ):
        if acoustic_weight < 0:
            raise ValueError("acoustic_weight must be >= 0")
        if smoothing_k <= 0:
            raise ValueError("smoothing_k must be > 0")
        self.vocab_size = vocab_size
        self.acoustic_weight = acoustic_weight
        self.smoothing_k = smoothing_k
        self.vocab_sha256 = vocab_sha256
        self.meta = dict(meta or {})
        self.pair_counts: dict[tuple[int, int], dict[int, int]] = {}
        self.left_counts: dict[int, dict[int, int]] = {}
        self.right_counts: dict[int, dict[int, int]] = {}
        self.unigram_counts: dict[int, int] = {}
        self._ctx_cache: dict[tuple, tuple] = {}
        self._decision_cache: dict[tuple, tuple[int, float]] = {}

    # -- training ---------------------------------------------------------

    def accumulate(self, example: TrainingExample) -> None:
        tokens, flags, targets = example.input_tokens, example.mask_flags, example.target_tokens
        for t, flagged in enumerate(flags):
            if not flagged:
                continue
            left, right = _neighbor_context(tokens, flags, t)
            center = targets[t]
            self.unigram_counts[center] = self.unigram_counts.get(center, 0) + 1
            if left is not None:
                bucket = self.left_counts.setdefault(left, {})
                bucket[center] = bucket.get(center, 0) + 1
            if right is not None:
                bucket = self.right_counts.setdefault(right, {})
                bucket[center] = bucket.get(center, 0) + 1
            if left is not None and right is not None:
                bucket = self.pair_counts.setdefault((left, right), {})
                bucket[center] = bucket.get(center, 0) + 1
        self.clear_cache()

    def clear_cache(self) -> None:
        self._ctx_cache.clear()
        self._decision_cache.clear()

    # -- context distributions ---------------------------------------------

    def _counter_for(self, left: int | None, right: int | None) -> dict[int, int]:
        if left is not None and right is not None:
            pair = self.pair_counts.get((left, right))
            if pair:
                return pair
        if left is not None:
            bucket = self.left_counts.get(left)
            if bucket:
                return bucket
        if right is not None:
            bucket = self.right_counts.get(right)
            if bucket:
                return bucket
        return self.unigram_counts

    def _context_stats(self, left: int | None, right: int | None):
        """Cached (logp, top1, top1_lp, top2, top2_lp) for a neighbor context."""
        key = (left, right)
        cached = self._ctx_cache.get(key)
        if cached is not None:
            return cached
        counter = self._counter_for(left, right)
        k = self.smoothing_k
        raw = np.zeros(self.vocab_size)
        for c, n in counter.items():
            raw[c] = n
        raw[self.mask_id] = 0.0
        denom = raw.sum() + k * (self.vocab_size - 1)
        logp = np.log((raw + k) / denom)
        logp[self.mask_id] = NEG_INF
        top1 = int(np.argmax(logp))
        tmp = logp.copy()
        tmp[top1] = NEG_INF
        top2 = int(np.argmax(tmp))
        stats = (logp, top1, float(logp[top1]), top2, float(logp[top2]))
        self._ctx_cache[key] = stats
        return stats

    def _evidence_terms(self, evidence: AcousticEvidence, t: int):
        """(spike, log base evidence, log spike evidence) for position t."""
        spike = evidence.spikes[t]
        fid = evidence.fidelities[t]
        if spike is None or fid == 0.0 or self.acoustic_weight == 0.0:
            return None, 0.0, 0.0
        base = (1.0 - fid) / evidence.vocab_size
        if fid == 1.0:
            if spike == self.mask_id:
                raise ValueError("acoustic evidence cannot select the mask placeholder")
            return spike, NEG_INF, 0.0
        return spike, math.log(base), math.log(base + fid)

    def fill_decisions(self, tokens, flags, evidence):
        if len(evidence) != len(tokens):
            raise ValueError(f"evidence length {len(evidence)} != sequence length {len(tokens)}")
        w = self.acoustic_weight
        spikes = evidence.spikes
        fids = evidence.fidelities
        cache = self._decision_cache
        out: dict[int, tuple[int, float]] = {}
        for t, flagged in enumerate(flags):
            if not flagged:
                continue
            left, right = _neighbor_context(tokens, flags, t)
            key = (left, right, spikes[t], fids[t])
            hit = cache.get(key)
            if hit is None:
                hit = cache[key] = self._decide(left, right, evidence, t, w)
            out[t] = hit
        return out

    def _decide(self, left, right, evidence, t, w) -> tuple[int, float]:
        logp, top1, top1_lp, top2, top2_lp = self._context_stats(left, right)
        spike, log_base, log_spike = self._evidence_terms(evidence, t)
        if spike is None:
            return (top1, top1_lp)
        if log_base == NEG_INF:
            return (spike, 0.0)
        # Evidence shifts every candidate by w*log_base except the spike;
        # only the spike's rank can change, so the decision is O(1).
        other, other_lp = (top1, top1_lp) if top1 != spike else (top2, top2_lp)
        spike_lp = float(logp[spike])
        u_other = other_lp + w * log_base
        u_spike = spike_lp + w * log_spike
        if u_spike > u_other or (u_spike == u_other and spike < other):
            choice, u_choice = spike, u_spike
        else:
            choice, u_choice = other, u_other
        log_z = _mixture_log_z(spike_lp, w * log_base, w * log_spike)
        return (choice, u_choice - log_z)

    def position_log_probs(self, tokens, flags, evidence):
        if len(evidence) != len(tokens):
            raise ValueError(f"evidence length {len(evidence)} != sequence length {len(tokens)}")
        w = self.acoustic_weight
        out: dict[int, np.ndarray] = {}
        for t, flagged in enumerate(flags):
            if not flagged:
                continue
            left, right = _neighbor_context(tokens, flags, t)
            logp = self._context_stats(left, right)[0]
            spike, log_base, log_spike = self._evidence_terms(evidence, t)
            if spike is None:
                out[t] = logp.copy()
                continue
            if log_base == NEG_INF:
                row = np.full(self.vocab_size, NEG_INF)
                row[spike] = 0.0
                out[t] = row
                continue
            spike_lp = float(logp[spike])
            row = logp + (w * log_base)
            row[spike] = spike_lp + w * log_spike
            row[self.mask_id] = NEG_INF
            out[t] = row - _mixture_log_z(spike_lp, w * log_base, w * log_spike)
        return out

    # -- serialization ------------------------------------------------------

    def to_payload(self) -> dict:
        return {
            "kind": "count_mlm",
            "schema": 1,
            "vocab_sha256": self.vocab_sha256,
            "hyperparams": {
                "vocab_size": self.vocab_size,
                "acoustic_weight": self.acoustic_weight,
                "smoothing_k": self.smoothing_k,
                **self.meta,
            },
            "counts": {
                "pair": {f"{l} {r}": {str(c): n for c, n in sorted(v.items())} for (l, r), v in self.pair_counts.items()},
                "left": {str(l): {str(c): n for c, n in sorted(v.items())} for l, v in self.left_counts.items()},
                "right": {str(r): {str(c): n for c, n in sorted(v.items())} for r, v in self.right_counts.items()},
                "unigram": {str(c): n for c, n in sorted(self.unigram_counts.items())},
            },
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "CountMlm":
        hp = payload["hyperparams"]
        meta = {k: v for k, v in hp.items() if k not in ("vocab_size", "acoustic_weight", "smoothing_k")}
        model = cls(
            vocab_size=int(hp["vocab_size"]),
            acoustic_weight=float(hp["acoustic_weight"]),
            smoothing_k=float(hp["smoothing_k"]),
            vocab_sha256=payload.get("vocab_sha256", ""),
            meta=meta,
        )
        counts = payload["counts"]
        for key, bucket in counts["pair"].items():
            l, r = key.split()
            model.pair_counts[(int(l), int(r))] = {int(c): int(n) for c, n in bucket.items()}
        for key, bucket in counts["left"].items():
            model.left_counts[int(key)] = {int(c): int(n) for c, n in bucket.items()}
        for key, bucket in counts["right"].items():
            model.right_counts[int(key)] = {int(c): int(n) for c, n in bucket.items()}
        model.unigram_counts = {int(c): int(n) for c, n in counts["unigram"].items()}
        return model


def _mixture_log_z(spike_lp: float, w_log_base: float, w_log_spike: float) -> float:
    """log normalizer of (context logp + weighted evidence) in closed form.

    All non-spike candidates share the same evidence term, so the sum
    collapses to two exponentials.
    """
    p_spike = math.exp(spike_lp)
    m = max(w_log_base, w_log_spike)
    return m + math.log(
        math.exp(w_log_base - m) * (1.0 - p_spike) + math.exp(w_log_spike - m) * p_spike
    )


def mlm_fill_and_score(
    tokens: Sequence[int],
    mask: MaskSolution,
    acoustic: AcousticEvidence,
    scorer: MlmScorer,
    del_id: int = Vocabulary.DEL_ID,
) -> tuple[tuple[int, ...], float]:
    """One non-autoregressive pass: fill every masked position, drop delete fills.

    Returns the corrected sequence and the summed log probability of the
    chosen fills (0.0 when nothing is masked).
    """
    if len(mask) != len(tokens):
        raise ValueError(f"mask length {len(mask)} != sequence length {len(tokens)}")
    if len(acoustic) != len(tokens):
        raise ValueError(f"evidence length {len(acoustic)} != sequence length {len(tokens)}")
    decisions = scorer.fill_decisions(tokens, mask.flags, acoustic)
    output: list[int] = []
    score = 0.0
    for t, tok in enumerate(tokens):
        if mask[t]:
            choice, lp = decisions[t]
            score += lp
            if choice != del_id:
                output.append(choice)
        else:
            output.append(tok)
    return tuple(output), score


def mlm_loss(log_dists, targets: Sequence[int], mask: MaskSolution) -> float:
    """Negated sum of target log probabilities over masked positions."""
    if len(targets) != len(mask):
        raise ValueError(f"targets length {len(targets)} != mask length {len(mask)}")
    loss = 0.0
    for t, flagged in enumerate(mask):
        if flagged:
            loss -= float(log_dists[t][targets[t]])
    return loss


def train_count_mlm(
    references: Sequence[Sequence[int]],
    vocab: Vocabulary,
    *,
    passes: int = 2,
    max_mask_frac: float = 0.4,
    ins_prob: float = 0.0,
    acoustic_weight: float = 0.1,
    smoothing_k: float = 0.5,
    seed: int = 0,
) -> CountMlm:
    """Accumulate context counts from randomly masked gold utterances.

    Each pass draws fresh mask solutions, so additional passes widen
    context coverage.  Deterministic given the seed.
    """
    if not references:
        raise ValueError("cannot train on an empty corpus")
    model = CountMlm(
        vocab_size=len(vocab),
        acoustic_weight=acoustic_weight,
        smoothing_k=smoothing_k,
        vocab_sha256=vocab.sha256(),
        meta={
            "max_mask_frac": max_mask_frac,
            "ins_prob": ins_prob,
            "passes": passes,
            "seed": seed,
        },
    )
    rng = seeded_rng(seed, "train-count-mlm")
    for _ in range(passes):
        for ref in references:
            example = make_training_example(ref, max_mask_frac, rng, vocab.MASK_ID)
            if ins_prob > 0.0:
                example = simulate_insertions(example, ins_prob, rng, vocab)
            model.accumulate(example)
    return model


class NgramLm:
    """Add-k smoothed n-gram language model over token ids.

    Histories are padded with a begin-of-sentence sentinel; scores sum the
    per-token conditional log probabilities, so the empty sequence scores
    exactly 0.  Every conditional distribution normalizes over the full
    vocabulary.
    """

    def __init__(
        self,
        vocab_size: int,
        order: int = 3,
        add_k: float = 0.1,
        vocab_sha256: str = "",
        meta: dict | None = None,
    ):
        if order < 1:
            raise ValueError("order must be >= 1")
        if add_k <= 0:
            raise ValueError("add_k must be > 0")
        self.vocab_size = vocab_size
        self.order = order
        self.add_k = add_k
        self.vocab_sha256 = vocab_sha256
        self.meta = dict(meta or {})
        self.counts: dict[tuple[int, ...], dict[int, int]] = {}
        self._totals: dict[tuple[int, ...], int] = {}
        self._lp_cache: dict[tuple, float] = {}

    def fit(self, sentences: Sequence[Sequence[int]]) -> "NgramLm":
        for sentence in sentences:
            padded = (BOS,) * (self.order - 1) + tuple(sentence)
            for i in range(len(sentence)):
                ctx = padded[i : i + self.order - 1]
                tok = padded[i + self.order - 1]
                bucket = self.counts.setdefault(ctx, {})
                bucket[tok] = bucket.get(tok, 0) + 1
                self._totals[ctx] = self._totals.get(ctx, 0) + 1
        self._lp_cache.clear()
        return self

    def logprob(self, token: int, context: tuple[int, ...]) -> float:
        key = context + (token,)
        cached = self._lp_cache.get(key)
        if cached is not None:
            return cached
        bucket = self.counts.get(context)
        c = bucket.get(token, 0) if bucket else 0
        total = self._totals.get(context, 0)
        lp = math.log((c + self.add_k) / (total + self.add_k * self.vocab_size))
        self._lp_cache[key] = lp
        return lp

    def score(self, tokens: Sequence[int]) -> float:
        padded = (BOS,) * (self.order - 1) + tuple(tokens)
        logprob = self.logprob
        total = 0.0
        for i in range(len(tokens)):
            total += logprob(padded[i + self.order - 1], padded[i : i + self.order - 1])
        return total

    def conditional_log_distribution(self, context: tuple[int, ...]) -> np.ndarray:
        return np.array([self.logprob(tok, context) for tok in range(self.vocab_size)])

    def to_payload(self) -> dict:
        return {
            "kind": "ngram_lm",
            "schema": 1,
            "vocab_sha256": self.vocab_sha256,
            "hyperparams": {
                "vocab_size": self.vocab_size,
                "order": self.order,
                "add_k": self.add_k,
                **self.meta,
            },
            "counts": {
                " ".join(str(t) for t in ctx): {str(c): n for c, n in sorted(bucket.items())}
                for ctx, bucket in self.counts.items()
            },
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "NgramLm":
        hp = payload["hyperparams"]
        meta = {k: v for k, v in hp.items() if k not in ("vocab_size", "order", "add_k")}
        model = cls(
            vocab_size=int(hp["vocab_size"]),
            order=int(hp["order"]),
            add_k=float(hp["add_k"]),
            vocab_sha256=payload.get("vocab_sha256", ""),
            meta=meta,
        )
        for key, bucket in payload["counts"].items():
            ctx = tuple(int(t) for t in key.split()) if key else ()
            model.counts[ctx] = {int(c): int(n) for c, n in bucket.items()}
            model._totals[ctx] = sum(model.counts[ctx].values())
        return model


def lm_score(tokens: Sequence[int], lm: NgramLm) -> float:
    """Log-domain sequence score under the language model."""
    return lm.score(tokens)


_PAYLOAD_KINDS = {"count_mlm": CountMlm, "ngram_lm": NgramLm}


def save_scorer(scorer, path: str | Path) -> None:
    """Write a self-describing checkpoint with byte-stable layout."""
    payload = scorer.to_payload()
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def load_scorer(path: str | Path, vocab: Vocabulary | None = None):
    """Load a checkpoint; verify the vocabulary hash when one is supplied."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: cannot read checkpoint ({e})") from None
    kind = payload.get("kind")
    if kind not in _PAYLOAD_KINDS:
        raise CheckpointError(f"{path}: unknown checkpoint kind {kind!r}")
    if vocab is not None and payload.get("vocab_sha256") not in ("", vocab.sha256()):
        raise CheckpointError(
            f"{path}: checkpoint was trained against a different vocabulary"
        )
    return _PAYLOAD_KINDS[kind].from_payload(payload)
