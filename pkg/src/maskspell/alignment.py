"""Edit-distance alignment, error counting, and reference-derived masks.

All functions are pure; WER vs CER is purely a matter of whether the
sequences handed in are word groups or raw tokens.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import MaskSolution, Vocabulary

try:  # optional C accelerator for int sequences
    from . import _fastalign
except ImportError:  # pragma: no cover - build without the extension
    _fastalign = None

# Alignment ops are plain tuples (kind, ref_pos, hyp_pos); the unused
# position slot is None.  Kept lightweight because alignment sits in the
# inner loop of corpus-scale evaluation.
MATCH = "match"
SUB = "sub"
DEL = "del"
INS = "ins"

Op = tuple


@dataclass(frozen=True)
class Alignment:
    """Minimal-cost edit script between a reference and a hypothesis.

    ``cost`` is the Levenshtein distance as computed by the DP; it always
    equals the number of non-match ops.
    """

    ops: tuple[Op, ...]
    cost: int


@dataclass(frozen=True)
class ErrorCounts:
    substitutions: int
    insertions: int
    deletions: int
    ref_len: int

    @property
    def total(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def error_rate(self) -> float:
        if self.ref_len > 0:
            return self.total / self.ref_len
        return 0.0 if self.total == 0 else float("inf")


@dataclass(frozen=True)
class CorpusBreakdown:
    """Aggregate substitution/insertion/deletion totals over many pairs."""

    substitutions: int
    insertions: int
    deletions: int
    ref_len: int

    @property
    def total(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def proportions(self) -> tuple[float, float, float]:
        t = self.total
        if t == 0:
            return (0.0, 0.0, 0.0)
        return (self.substitutions / t, self.insertions / t, self.deletions / t)

    @property
    def error_rate(self) -> float:
        if self.ref_len > 0:
            return self.total / self.ref_len
        return 0.0 if self.total == 0 else float("inf")


def align(reference: Sequence, hypothesis: Sequence) -> Alignment:
    """Minimal unit-cost alignment with deterministic tie-breaking.

    When costs tie during backtrace the diagonal step (match/substitute)
    wins over deletion, which wins over insertion.
    """
    if _fastalign is not None:
        try:
            return Alignment(*_fastalign.align_ops(reference, hypothesis))
        except TypeError:
            pass  # non-int items (e.g. word tuples): take the generic path
    r = len(reference)
    h = len(hypothesis)
    # A shared prefix/suffix of equal items always aligns as matches under
    # diagonal-first tie-breaking, so strip it before running the DP.
    pre = 0
    while pre < r and pre < h and reference[pre] == hypothesis[pre]:
        pre += 1
    post = 0
    while post < r - pre and post < h - pre and reference[r - 1 - post] == hypothesis[h - 1 - post]:
        post += 1

    ops: list[Op] = [(MATCH, i, i) for i in range(pre)]
    ri, hi = r - post, h - post
    n, m = ri - pre, hi - pre
    cost = 0
    if n or m:
        ref_mid = reference[pre:ri]
        hyp_mid = hypothesis[pre:hi]
        rows = [list(range(m + 1))]
        prev = rows[0]
        for i in range(1, n + 1):
            cur = [i]
            push = cur.append
            best = i
            c_ref = ref_mid[i - 1]
            up_iter = iter(prev)
            next(up_iter)
            # Neighbor cells never differ from the diagonal by more than one,
            # so each cell is either diag or diag + 1; compares replace adds.
            for c_hyp, diag, up in zip(hyp_mid, prev, up_iter):
                if c_ref == c_hyp or up < diag or best < diag:
                    cand = diag
                else:
                    cand = diag + 1
                push(cand)
                best = cand
            rows.append(cur)
            prev = cur
        cost = rows[n][m]
        mid_ops: list[Op] = []
        i, j = n, m
        while i > 0 and j > 0:
            cur_cost = rows[i][j]
            same = ref_mid[i - 1] == hyp_mid[j - 1]
            if cur_cost == rows[i - 1][j - 1] + (not same):
                mid_ops.append((MATCH if same else SUB, pre + i - 1, pre + j - 1))
                i -= 1
                j -= 1
            elif cur_cost == rows[i - 1][j] + 1:
                mid_ops.append((DEL, pre + i - 1, None))
                i -= 1
            else:
                mid_ops.append((INS, None, pre + j - 1))
                j -= 1
        while i > 0:
            mid_ops.append((DEL, pre + i - 1, None))
            i -= 1
        while j > 0:
            mid_ops.append((INS, None, pre + j - 1))
            j -= 1
        mid_ops.reverse()
        ops.extend(mid_ops)
    for k in range(post):
        ops.append((MATCH, ri + k, hi + k))
    return Alignment(tuple(ops), cost)


def error_counts(alignment: Alignment, ref_len: int) -> ErrorCounts:
    """Count substitutions/insertions/deletions in an alignment."""
    subs = ins = dels = 0
    for op in alignment.ops:
        kind = op[0]
        if kind == SUB:
            subs += 1
        elif kind == INS:
            ins += 1
        elif kind == DEL:
            dels += 1
    if ref_len == 0 and dels > 0:
        raise ValueError("alignment deletes from an empty reference")
    return ErrorCounts(subs, ins, dels, ref_len)


def sequence_error_counts(reference: Sequence, hypothesis: Sequence) -> ErrorCounts:
    return error_counts(align(reference, hypothesis), len(reference))


def word_error_counts(
    reference: Sequence[int], hypothesis: Sequence[int], vocab: Vocabulary
) -> ErrorCounts:
    """Error counts over boundary-marked words rather than raw tokens.

    Correcting one token of a multi-token word does not fix the word, so
    word-level rates are the honest metric for sub-word systems.
    """
    ref_words = vocab.words_of(reference)
    hyp_words = vocab.words_of(hypothesis)
    return error_counts(align(ref_words, hyp_words), len(ref_words))


def reference_mask(alignment: Alignment, hyp_len: int) -> MaskSolution:
    """Mask exactly the hypothesis positions that are wrong vs the reference.

    Substituted and inserted positions become True; matches stay False.
    Deletions have no hypothesis position to flag.
    """
    flags = [False] * hyp_len
    for op in alignment.ops:
        if op[0] == SUB or op[0] == INS:
            flags[op[2]] = True
    return MaskSolution(tuple(flags))


def corpus_breakdown(pairs: Sequence[tuple[Sequence, Sequence]]) -> CorpusBreakdown:
    """Sum error counts over (reference, hypothesis) pairs."""
    subs = ins = dels = ref_len = 0
    for reference, hypothesis in pairs:
        c = sequence_error_counts(reference, hypothesis)
        subs += c.substitutions
        ins += c.insertions
        dels += c.deletions
        ref_len += c.ref_len
    return CorpusBreakdown(subs, ins, dels, ref_len)
