"""The correction pipeline: sample masks, fill, fuse scores, select.

Per hypothesis, a set of mask solutions is sampled and each one filled by
the masked LM; each corrected candidate is scored by the external LM and
the two log scores are fused by weighted sum.  Over an n-best list the
candidate sets are pooled and the global fused argmax wins.  Oracle
selection picks the candidate closest to the reference instead.
"""

from __future__ import annotations

import json
import multiprocessing
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .alignment import word_error_counts
from .core import AcousticEvidence, Hypothesis, MaskSolution, NBestList, Vocabulary, seeded_rng
from .masking import MaskConfig, sample_mask_solutions
from .scorers import CountMlm, MlmScorer, NgramLm, mlm_fill_and_score


@dataclass(frozen=True)
class FusionWeights:
    mlm_weight: float = 1.0
    lm_weight: float = 0.5


def fuse(mlm_score: float, lm_score: float, weights: FusionWeights) -> float:
    """Weighted sum of log-domain scores."""
    return weights.mlm_weight * mlm_score + weights.lm_weight * lm_score


@dataclass(frozen=True)
class DecodeConfig:
    mask: MaskConfig = MaskConfig()
    fusion: FusionWeights = FusionWeights()
    nbest_depth: int = 5
    length_normalize: bool = False

    def __post_init__(self) -> None:
        if self.nbest_depth < 1:
            raise ValueError("nbest_depth must be >= 1")


@dataclass(frozen=True)
class CorrectionCandidate:
    tokens: tuple[int, ...]
    source_hyp_index: int
    mask_used: MaskSolution
    mlm_score: float
    lm_score: float
    fused_score: float


def _best_key(candidate: CorrectionCandidate):
    # Highest fused score; ties prefer fewer masked positions, then the
    # lexicographically smallest token sequence.
    return (-candidate.fused_score, candidate.mask_used.cardinality, candidate.tokens)


def select_best(candidates: Sequence[CorrectionCandidate]) -> CorrectionCandidate:
    if not candidates:
        raise ValueError("empty candidate list")
    return min(candidates, key=_best_key)


def correct_hypothesis(
    hyp: Hypothesis,
    acoustic: AcousticEvidence,
    cfg: DecodeConfig,
    mlm: MlmScorer,
    lm: NgramLm,
    rng,
    vocab: Vocabulary | None = None,
    source_index: int = 0,
) -> tuple[CorrectionCandidate, list[CorrectionCandidate]]:
    """Correct one hypothesis; returns (best, all candidates)."""
    if len(acoustic) != len(hyp.tokens):
        raise ValueError("acoustic evidence length must match the hypothesis")
    candidates: list[CorrectionCandidate] = []
    for mask in sample_mask_solutions(hyp, cfg.mask, rng, vocab):
        filled, mlm_score = mlm_fill_and_score(hyp.tokens, mask, acoustic, mlm)
        lm_score = lm.score(filled)
        if cfg.length_normalize:
            norm = max(1, len(filled))
            mlm_score /= norm
            lm_score /= norm
        candidates.append(
            CorrectionCandidate(
                tokens=filled,
                source_hyp_index=source_index,
                mask_used=mask,
                mlm_score=mlm_score,
                lm_score=lm_score,
                fused_score=fuse(mlm_score, lm_score, cfg.fusion),
            )
        )
    return select_best(candidates), candidates


def correct_nbest(
    nbest: NBestList,
    acoustics: Sequence[AcousticEvidence],
    cfg: DecodeConfig,
    mlm: MlmScorer,
    lm: NgramLm,
    vocab: Vocabulary | None = None,
) -> tuple[CorrectionCandidate, list[CorrectionCandidate]]:
    """Pool candidates over the top ``nbest_depth`` hypotheses.

    Each hypothesis gets an independent random stream derived from the
    config seed, the utterance id, and its index, so deepening the n-best
    never changes the candidates contributed by shallower entries.
    """
    depth = min(cfg.nbest_depth, len(nbest.hypotheses))
    pooled: list[CorrectionCandidate] = []
    for i in range(depth):
        rng = seeded_rng(cfg.mask.seed, "mask", nbest.utterance_id, i)
        _, candidates = correct_hypothesis(
            nbest.hypotheses[i], acoustics[i], cfg, mlm, lm, rng, vocab, source_index=i
        )
        pooled.extend(candidates)
    return select_best(pooled), pooled


def oracle_select(
    candidates: Sequence[CorrectionCandidate],
    reference: Sequence[int],
    vocab: Vocabulary,
) -> CorrectionCandidate:
    """Candidate with the lowest word error rate against the reference.

    Ties prefer the higher fused score, then the lexicographically
    smallest token sequence.
    """
    if not candidates:
        raise ValueError("empty candidate list")
    return min(
        candidates,
        key=lambda c: (
            word_error_counts(reference, c.tokens, vocab).error_rate,
            -c.fused_score,
            c.tokens,
        ),
    )


@dataclass(frozen=True)
class EvidenceTable:
    """Acoustic evidence lookup for decoding, built from synthesis truth.

    Unknown utterances (or a missing table) fall back to uniform evidence.
    ``fidelity_override`` re-parameterizes the stored spikes with a
    different mixture weight.
    """

    vocab_size: int
    records: dict
    fidelity_override: float | None = None

    @classmethod
    def uniform(cls, vocab_size: int) -> "EvidenceTable":
        return cls(vocab_size=vocab_size, records={})

    @classmethod
    def from_truth_records(
        cls, records, vocab_size: int, fidelity_override: float | None = None
    ) -> "EvidenceTable":
        table = {
            rec.utterance_id: (rec.acoustic_fidelity, rec.true_tokens) for rec in records
        }
        return cls(vocab_size=vocab_size, records=table, fidelity_override=fidelity_override)

    def for_hypothesis(self, utterance_id: str, hyp_index: int, length: int) -> AcousticEvidence:
        rec = self.records.get(utterance_id)
        if rec is None:
            return AcousticEvidence.uniform(length, self.vocab_size)
        fidelity, per_hyp = rec
        if hyp_index >= len(per_hyp):
            return AcousticEvidence.uniform(length, self.vocab_size)
        trues = per_hyp[hyp_index]
        if len(trues) != length:
            raise ValueError(
                f"utterance {utterance_id!r} hyp {hyp_index}: truth length {len(trues)} "
                f"!= hypothesis length {length}"
            )
        if self.fidelity_override is not None:
            fidelity = self.fidelity_override
        return AcousticEvidence.from_truth(trues, self.vocab_size, fidelity)


def _decode_one(
    utt: NBestList,
    cfg: DecodeConfig,
    mlm: MlmScorer,
    lm: NgramLm,
    vocab: Vocabulary,
    evidence: EvidenceTable,
    store_candidates: bool,
) -> dict:
    depth = min(cfg.nbest_depth, len(utt.hypotheses))
    acoustics = [
        evidence.for_hypothesis(utt.utterance_id, i, len(utt.hypotheses[i]))
        for i in range(depth)
    ]
    best, pooled = correct_nbest(utt, acoustics, cfg, mlm, lm, vocab)
    record = {
        "id": utt.utterance_id,
        "best_tokens": list(vocab.surfaces_of(best.tokens)),
        "fused_score": best.fused_score,
        "mlm_score": best.mlm_score,
        "lm_score": best.lm_score,
        "source_hyp_index": best.source_hyp_index,
        "num_candidates": len(pooled),
    }
    if store_candidates:
        record["candidates"] = [
            {
                "tokens": list(vocab.surfaces_of(c.tokens)),
                "mlm_score": c.mlm_score,
                "lm_score": c.lm_score,
                "fused_score": c.fused_score,
                "source_hyp_index": c.source_hyp_index,
            }
            for c in pooled
        ]
    return record


_POOL_STATE: dict = {}


def _pool_worker(index: int) -> dict:
    s = _POOL_STATE
    return _decode_one(
        s["corpus"][index], s["cfg"], s["mlm"], s["lm"], s["vocab"], s["evidence"], s["store"]
    )


def decode_corpus(
    corpus: Sequence[NBestList],
    cfg: DecodeConfig,
    mlm: MlmScorer,
    lm: NgramLm,
    vocab: Vocabulary,
    evidence: EvidenceTable,
    workers: int = 1,
    store_candidates: bool = False,
) -> tuple[list[dict], float]:
    """Decode a corpus; returns (per-utterance records, decode wall seconds).

    Results are a pure function of (corpus, config, scorers, seed):
    utterance-level parallelism shares the scorers read-only and derives
    every random stream from stable ids, so any worker count produces
    bit-identical records.  Wall time covers only the decode loop.
    """
    if workers <= 1:
        start = time.perf_counter()
        results = [
            _decode_one(utt, cfg, mlm, lm, vocab, evidence, store_candidates) for utt in corpus
        ]
        return results, time.perf_counter() - start

    _POOL_STATE.update(
        corpus=list(corpus), cfg=cfg, mlm=mlm, lm=lm, vocab=vocab,
        evidence=evidence, store=store_candidates,
    )
    try:
        ctx = multiprocessing.get_context("fork")
        start = time.perf_counter()
        with ctx.Pool(processes=workers) as pool:
            chunk = max(1, len(corpus) // (workers * 4))
            results = pool.map(_pool_worker, range(len(corpus)), chunksize=chunk)
        wall = time.perf_counter() - start
    finally:
        _POOL_STATE.clear()
    return results, wall


def write_decode_results(results: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in results:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_decode_results(path: str | Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


def meta_path_for(results_path: str | Path) -> Path:
    return Path(str(results_path) + ".meta.json")


def write_decode_meta(results_path: str | Path, meta: dict) -> None:
    meta_path_for(results_path).write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_decode_meta(results_path: str | Path) -> dict | None:
    path = meta_path_for(results_path)
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))
