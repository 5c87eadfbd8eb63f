"""Command-line surface: synthesize, train, decode, evaluate.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import alignment, core, decode, report, scorers, synth
from .masking import MaskConfig


class UsageError(Exception):
    pass


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        metavar="FILE",
        help="JSON file with defaults for any flag of this command (flags override)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskspell",
        description="Mask-and-refill spell correction for recognizer n-best lists",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subparser_map = {}  # type: ignore[attr-defined]
    original_add_parser = sub.add_parser

    def add_parser(name, **kwargs):
        p = original_add_parser(name, **kwargs)
        parser.subparser_map[name] = p  # type: ignore[attr-defined]
        return p

    sub.add_parser = add_parser

    p = sub.add_parser("make-refs", help="generate a synthetic reference corpus and vocabulary")
    _add_config_flag(p)
    p.add_argument("--count", type=int, default=1000, help="number of utterances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--language-seed", type=int, default=0, help="seed for words and transitions")
    p.add_argument("--num-words", type=int, default=80)
    p.add_argument("--min-words", type=int, default=5)
    p.add_argument("--max-words", type=int, default=9)
    p.add_argument("-o", "--output", required=True, help="references JSONL path")
    p.add_argument("--vocab-out", required=True, help="vocabulary file path")
    p.set_defaults(func=cmd_make_refs)

    p = sub.add_parser("synth", help="corrupt references into a first-pass n-best corpus")
    _add_config_flag(p)
    p.add_argument("--refs", required=True, help="references JSONL")
    p.add_argument("--vocab", required=True)
    p.add_argument("--sub", type=float, default=0.08, help="substitution rate")
    p.add_argument("--ins", type=float, default=0.01, help="insertion rate")
    p.add_argument("--del", dest="del_rate", type=float, default=0.01, help="deletion rate")
    p.add_argument("--calibration", type=float, default=1.0)
    p.add_argument("--acoustic-fidelity", type=float, default=1.0)
    p.add_argument("--nbest", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="corpus JSONL path")
    p.add_argument("--truth-out", help="truth sidecar path (default: <output>.truth.jsonl)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the masked LM and the n-gram LM")
    _add_config_flag(p)
    p.add_argument("--refs", required=True, help="references JSONL")
    p.add_argument("--vocab", required=True)
    p.add_argument("--passes", type=int, default=2)
    p.add_argument("--max-mask-frac", type=float, default=0.4)
    p.add_argument("--sim-ins", action="store_true", help="simulate insertion errors in training")
    p.add_argument("--ins-prob", type=float, default=0.1, help="per-gap insertion probability with --sim-ins")
    p.add_argument("--acoustic-weight", type=float, default=0.1)
    p.add_argument("--smoothing-k", type=float, default=0.5)
    p.add_argument("--lm-order", type=int, default=3)
    p.add_argument("--add-k", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--outdir", required=True, help="directory for mlm.json and lm.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="correct a corpus with mask sampling")
    _add_config_flag(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--mlm", required=True, help="masked-LM checkpoint")
    p.add_argument("--lm", required=True, help="language-model checkpoint")
    p.add_argument("--truth", help="truth sidecar providing acoustic evidence")
    p.add_argument("--acoustic-fidelity", type=float, help="override the stored evidence fidelity")
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--sample-prob", type=float, default=0.5)
    p.add_argument("--nbest", type=int, default=5)
    p.add_argument("--mlm-weight", type=float, default=1.0)
    p.add_argument("--lm-weight", type=float, default=0.5)
    p.add_argument("--granularity", choices=("token", "word"), default="token")
    p.add_argument("--no-baseline", action="store_true", help="drop the deterministic threshold mask")
    p.add_argument("--length-norm", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--store-candidates", action="store_true", help="keep all candidates for oracle evaluation")
    p.add_argument("-o", "--output", required=True, help="decode results JSONL path")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="score decode results and render the report")
    _add_config_flag(p)
    p.add_argument("--corpus", required=True, help="corpus JSONL with references")
    p.add_argument("--vocab", required=True)
    p.add_argument(
        "--condition",
        action="append",
        default=[],
        metavar="NAME=RESULTS",
        help="named decode-results file; repeatable",
    )
    p.add_argument("--oracle", action="store_true", help="also score oracle selection")
    p.add_argument("--unit", choices=("word", "token"), default="word")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("-o", "--output", required=True, help="report prefix (writes .json/.tsv/figures)")
    p.set_defaults(func=cmd_evaluate)

    return parser


def cmd_make_refs(args) -> int:
    language = synth.SyntheticLanguage(seed=args.language_seed, num_words=args.num_words)
    refs = language.generate_references(
        args.count, seed=args.seed, min_words=args.min_words, max_words=args.max_words
    )
    language.vocab.save(args.vocab_out)
    core.save_references(refs, args.output, language.vocab)
    print(f"wrote {len(refs)} references to {args.output} and vocabulary to {args.vocab_out}")
    return 0


def cmd_synth(args) -> int:
    vocab = core.Vocabulary.from_file(args.vocab)
    refs = core.load_references(args.refs, vocab)
    try:
        cfg = synth.CorruptionConfig(
            sub_rate=args.sub,
            ins_rate=args.ins,
            del_rate=args.del_rate,
            calibration=args.calibration,
            acoustic_fidelity=args.acoustic_fidelity,
            nbest_depth=args.nbest,
            seed=args.seed,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    corpus, truths = synth.build_corpus(refs, cfg, vocab)
    core.save_corpus(corpus, args.output, vocab)
    truth_out = args.truth_out or str(args.output) + ".truth.jsonl"
    synth.save_truth(truths, truth_out, vocab)
    print(f"wrote {len(corpus)} utterances to {args.output} (truth: {truth_out})")
    return 0


def cmd_train(args) -> int:
    vocab = core.Vocabulary.from_file(args.vocab)
    refs = core.load_references(args.refs, vocab)
    if not refs:
        raise UsageError("reference corpus is empty")
    sentences = [r.tokens for r in refs]
    mlm = scorers.train_count_mlm(
        sentences,
        vocab,
        passes=args.passes,
        max_mask_frac=args.max_mask_frac,
        ins_prob=args.ins_prob if args.sim_ins else 0.0,
        acoustic_weight=args.acoustic_weight,
        smoothing_k=args.smoothing_k,
        seed=args.seed,
    )
    lm = scorers.NgramLm(
        vocab_size=len(vocab),
        order=args.lm_order,
        add_k=args.add_k,
        vocab_sha256=vocab.sha256(),
        meta={"seed": args.seed},
    ).fit(sentences)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    scorers.save_scorer(mlm, outdir / "mlm.json")
    scorers.save_scorer(lm, outdir / "lm.json")
    print(f"wrote {outdir / 'mlm.json'} and {outdir / 'lm.json'}")
    return 0


def cmd_decode(args) -> int:
    vocab = core.Vocabulary.from_file(args.vocab)
    corpus = core.load_corpus(args.corpus, vocab)
    mlm = scorers.load_scorer(args.mlm, vocab)
    lm = scorers.load_scorer(args.lm, vocab)
    if not isinstance(mlm, scorers.CountMlm):
        raise UsageError(f"--mlm checkpoint is a {type(mlm).__name__}, expected a masked LM")
    if not isinstance(lm, scorers.NgramLm):
        raise UsageError(f"--lm checkpoint is a {type(lm).__name__}, expected an n-gram LM")
    if args.truth:
        truth_records = synth.load_truth(args.truth, vocab)
        evidence = decode.EvidenceTable.from_truth_records(
            truth_records, len(vocab), fidelity_override=args.acoustic_fidelity
        )
    else:
        evidence = decode.EvidenceTable.uniform(len(vocab))

    cfg = decode.DecodeConfig(
        mask=MaskConfig(
            threshold=args.threshold,
            granularity=args.granularity,
            num_samples=args.samples,
            sample_prob=args.sample_prob,
            include_baseline=not args.no_baseline,
            seed=args.seed,
        ),
        fusion=decode.FusionWeights(mlm_weight=args.mlm_weight, lm_weight=args.lm_weight),
        nbest_depth=args.nbest,
        length_normalize=args.length_norm,
    )
    results, wall = decode.decode_corpus(
        corpus, cfg, mlm, lm, vocab, evidence,
        workers=args.workers, store_candidates=args.store_candidates,
    )
    decode.write_decode_results(results, args.output)
    decode.write_decode_meta(
        args.output,
        {
            "schema": 1,
            "wall_seconds": wall,
            "total_audio_seconds": sum(u.audio_seconds for u in corpus),
            "num_utterances": len(corpus),
            "workers": args.workers,
            "config": {
                "threshold": args.threshold,
                "samples": args.samples,
                "sample_prob": args.sample_prob,
                "nbest": args.nbest,
                "mlm_weight": args.mlm_weight,
                "lm_weight": args.lm_weight,
                "granularity": args.granularity,
                "include_baseline": not args.no_baseline,
                "length_normalize": args.length_norm,
                "seed": args.seed,
            },
        },
    )
    print(f"decoded {len(results)} utterances in {wall:.3f}s -> {args.output}")
    return 0


def _unit_sequences(tokens, vocab, unit):
    if unit == "word":
        return vocab.words_of(tokens)
    return list(tokens)


def _condition_rates(pairs):
    breakdown = alignment.corpus_breakdown(pairs)
    s, i, d = breakdown.proportions
    return breakdown.error_rate, s, i, d


def cmd_evaluate(args) -> int:
    vocab = core.Vocabulary.from_file(args.vocab)
    corpus = core.load_corpus(args.corpus, vocab)
    references: dict[str, tuple[int, ...]] = {}
    for utt in corpus:
        if utt.reference is None:
            raise UsageError(f"utterance {utt.utterance_id!r} has no reference")
        references[utt.utterance_id] = utt.reference
    total_audio = sum(u.audio_seconds for u in corpus)

    rows: list[report.ConditionRow] = []

    # First-pass baseline: the top hypothesis as-is.
    base_pairs = [
        (_unit_sequences(u.reference, vocab, args.unit),
         _unit_sequences(u.hypotheses[0].tokens, vocab, args.unit))
        for u in corpus
    ]
    rate, s, i, d = _condition_rates(base_pairs)
    oracle_rate = None
    if args.oracle:
        oracle_rate = _nbest_oracle_rate(corpus, vocab, args.unit)
    rows.append(
        report.ConditionRow(
            condition="bm-baseline",
            error_rate=rate,
            oracle_error_rate=oracle_rate,
            sub_proportion=s,
            ins_proportion=i,
            del_proportion=d,
            wall_seconds=0.0,
            total_audio_seconds=total_audio,
        )
    )

    for spec_item in args.condition:
        if "=" not in spec_item:
            raise UsageError(f"--condition must look like NAME=RESULTS, got {spec_item!r}")
        name, path = spec_item.split("=", 1)
        results = decode.load_decode_results(path)
        pairs = []
        oracle_errors = 0
        oracle_ref_len = 0
        have_candidates = True
        for record in results:
            utt_id = record["id"]
            if utt_id not in references:
                raise UsageError(f"decode results mention unknown utterance {utt_id!r}")
            ref = references[utt_id]
            hyp = vocab.ids_of(record["best_tokens"])
            pairs.append(
                (_unit_sequences(ref, vocab, args.unit), _unit_sequences(hyp, vocab, args.unit))
            )
            if args.oracle:
                candidates = record.get("candidates")
                if not candidates:
                    have_candidates = False
                    continue
                best = min(
                    candidates,
                    key=lambda c: (
                        _pair_error_rate(ref, vocab.ids_of(c["tokens"]), vocab, args.unit),
                        -c["fused_score"],
                        tuple(c["tokens"]),
                    ),
                )
                counts = _pair_error_counts(ref, vocab.ids_of(best["tokens"]), vocab, args.unit)
                oracle_errors += counts.total
                oracle_ref_len += counts.ref_len
        if len(pairs) != len(references):
            missing = len(references) - len(pairs)
            raise UsageError(f"condition {name!r}: {missing} utterances missing from results")
        rate, s, i, d = _condition_rates(pairs)
        oracle_rate = None
        if args.oracle:
            if not have_candidates:
                raise UsageError(
                    f"condition {name!r}: results lack stored candidates; "
                    "decode with --store-candidates for --oracle"
                )
            oracle_rate = oracle_errors / oracle_ref_len if oracle_ref_len else 0.0
        meta = decode.load_decode_meta(path)
        wall = float(meta["wall_seconds"]) if meta else 0.0
        rows.append(
            report.ConditionRow(
                condition=name,
                error_rate=rate,
                oracle_error_rate=oracle_rate,
                sub_proportion=s,
                ins_proportion=i,
                del_proportion=d,
                wall_seconds=wall,
                total_audio_seconds=total_audio,
            )
        )

    run = report.RunReport(corpus_id=str(args.corpus), unit=args.unit, rows=tuple(rows))
    print(report.render_table(run))
    prefix = Path(args.output)
    if prefix.parent and not prefix.parent.exists():
        prefix.parent.mkdir(parents=True, exist_ok=True)
    report.write_json(run, prefix.with_name(prefix.name + ".json"))
    report.write_tsv(run, prefix.with_name(prefix.name + ".tsv"))
    if not args.no_figures:
        for path in report.write_figures(run, prefix):
            print(f"figure: {path}")
    print(f"report: {prefix.with_name(prefix.name + '.json')}")
    return 0


def _pair_error_counts(ref, hyp, vocab, unit):
    return alignment.sequence_error_counts(
        _unit_sequences(ref, vocab, unit), _unit_sequences(hyp, vocab, unit)
    )


def _pair_error_rate(ref, hyp, vocab, unit):
    return _pair_error_counts(ref, hyp, vocab, unit).error_rate


def _nbest_oracle_rate(corpus, vocab, unit) -> float:
    errors = 0
    ref_len = 0
    for utt in corpus:
        best = min(
            utt.hypotheses,
            key=lambda h: (
                _pair_error_rate(utt.reference, h.tokens, vocab, unit),
                -h.transducer_score,
                h.tokens,
            ),
        )
        counts = _pair_error_counts(utt.reference, best.tokens, vocab, unit)
        errors += counts.total
        ref_len += counts.ref_len
    return errors / ref_len if ref_len else 0.0


def main(argv=None) -> int:
    parser = build_parser()
    # A --config file provides defaults; explicit flags override them.
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" in argv:
        idx = argv.index("--config")
        if idx + 1 >= len(argv):
            parser.error("--config requires a file argument")
        try:
            defaults = json.loads(Path(argv[idx + 1]).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            print(f"error: cannot read config file: {e}", file=sys.stderr)
            return 1
        if not isinstance(defaults, dict):
            parser.error("--config file must hold a JSON object")
        if argv and argv[0] in parser.subparser_map:  # type: ignore[attr-defined]
            parser.subparser_map[argv[0]].set_defaults(**defaults)  # type: ignore[attr-defined]
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (core.CorpusFormatError, scorers.CheckpointError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
