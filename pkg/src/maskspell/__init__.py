"""Confidence-guided masked-LM spell correction for recognizer n-best lists."""

from .alignment import (
    Alignment,
    CorpusBreakdown,
    ErrorCounts,
    align,
    corpus_breakdown,
    error_counts,
    reference_mask,
    word_error_counts,
)
from .core import (
    AcousticEvidence,
    CorpusFormatError,
    Hypothesis,
    MaskSolution,
    NBestList,
    ReferenceUtterance,
    Vocabulary,
    load_corpus,
    load_references,
    save_corpus,
    save_references,
    seeded_rng,
)
from .decode import (
    CorrectionCandidate,
    DecodeConfig,
    EvidenceTable,
    FusionWeights,
    correct_hypothesis,
    correct_nbest,
    decode_corpus,
    fuse,
    oracle_select,
    select_best,
)
from .masking import MaskConfig, expand_to_words, sample_mask_solutions, threshold_mask
from .scorers import (
    CheckpointError,
    CountMlm,
    MlmScorer,
    NgramLm,
    TrainingExample,
    UniformMlm,
    lm_score,
    load_scorer,
    make_training_example,
    mlm_fill_and_score,
    mlm_loss,
    save_scorer,
    simulate_insertions,
    train_count_mlm,
)
from .synth import (
    AppliedCounts,
    BetaParams,
    CorruptionConfig,
    SyntheticLanguage,
    TruthRecord,
    build_corpus,
    corrupt_reference,
    load_truth,
    save_truth,
)

__version__ = "0.1.0"
