"""Command-line interface.

Subcommands: prepare, aggregate, kappa, train, predict, synthesize,
evaluate, sweep-context, ablate, plot, serve-annotation. Every config key
is overridable with ``--set key=value``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    RunConfig,
    apply_overrides,
    config_for_preset,
    dump_config,
    load_config,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emphtts",
        description="Conversational TTS with word-level emphasis rendering",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", type=Path, help="flat key=value config file")
        p.add_argument("--preset", choices=("toy", "paper"), help="dimension preset")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override any config key (repeatable)",
        )

    p = sub.add_parser("prepare", help="generate a toy corpus or validate an existing one")
    p.add_argument("--corpus", type=Path, help="corpus file to validate")
    p.add_argument("--toy", type=int, metavar="N", help="generate N toy conversations")
    p.add_argument("--out", type=Path, help="output directory for the toy corpus")
    p.add_argument("--turns", default="3,6", help="toy turns per conversation, lo,hi")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("aggregate", help="aggregate an annotation log onto a corpus")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--annotations", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--quorum", type=int, default=6)

    p = sub.add_parser("kappa", help="inter-annotator agreement over an annotation log")
    p.add_argument("--annotations", type=Path, required=True)

    p = sub.add_parser("train", help="train a model")
    add_config_args(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--resume", type=Path, help="checkpoint to resume from")

    p = sub.add_parser("predict", help="predict per-turn emphasis intensities")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--conversation", help="conversation id (default: all)")
    p.add_argument("--gold-history", action="store_true",
                   help="read gold history labels instead of chained predictions")
    p.add_argument("--out", type=Path, help="write predictions as JSON")

    p = sub.add_parser("synthesize", help="synthesize one turn")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--conversation", required=True)
    p.add_argument("--turn", type=int, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--gold-history", action="store_true")
    p.add_argument("--reconstruct", type=int, default=32,
                   help="phase-reconstruction iterations (0 disables audio)")
    p.add_argument("--plot", action="store_true", help="also emit a spectrogram plot")

    p = sub.add_parser("evaluate", help="emphasis and acoustic metrics on a corpus")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--gold-history", action="store_true")
    p.add_argument("--out", type=Path, help="write results as JSON")

    p = sub.add_parser("sweep-context", help="train/evaluate across context lengths")
    add_config_args(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--lengths", default="4,6,8,10,12,14,16")
    p.add_argument("--out", type=Path, help="write the table as JSON")

    p = sub.add_parser("ablate", help="configure (and optionally run) an ablation experiment")
    add_config_args(p)
    p.add_argument("--experiment", type=int, required=True, metavar="1..20")
    p.add_argument("--corpus", type=Path, help="train and evaluate with the ablated config")
    p.add_argument("--out", type=Path, help="checkpoint path when training")

    p = sub.add_parser("plot", help="mel/F0 plot with emphasis boxes for a corpus turn")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--conversation", required=True)
    p.add_argument("--turn", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("serve-annotation", help="run the annotation HTTP service")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--annotations", type=Path, required=True, help="append-only log path")
    p.add_argument("--tokens", type=Path, required=True,
                   help="JSON file mapping bearer tokens to annotator ids")
    p.add_argument("--quorum", type=int, default=6)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8571)

    return parser


def _config_from_args(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = config_for_preset(args.preset or "toy")
    if args.preset and args.config:
        cfg = apply_overrides(cfg, [f"preset={args.preset}"])
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    return cfg


METRIC_HEADERS = (
    ("match_1", "Match_1"),
    ("match_2", "Match_2"),
    ("match_mean", "Match_mean"),
    ("f1_1", "F1_1"),
    ("f1_2", "F1_2"),
    ("f1_mean", "F1_mean"),
    ("mae_p", "MAE-P"),
    ("mae_e", "MAE-E"),
    ("mae_d", "MAE-D"),
)


def _print_metric_table(rows: list[dict], lead: str | None = None) -> None:
    keys = [k for k, _ in METRIC_HEADERS if any(k in row for row in rows)]
    headers = ([lead] if lead else []) + [h for k, h in METRIC_HEADERS if k in keys]
    print("  ".join(f"{h:>10}" for h in headers))
    for row in rows:
        cells = []
        if lead:
            cells.append(f"{row[lead.lower()]:>10g}")
        cells += [f"{row.get(k, float('nan')):>10.4f}" for k in keys]
        print("  ".join(cells))


def cmd_prepare(args) -> int:
    from .corpus import load_corpus, save_corpus
    from .toy import make_toy_corpus

    if args.toy is not None:
        if not args.out:
            print("prepare --toy requires --out DIR", file=sys.stderr)
            return 2
        lo, hi = (int(x) for x in args.turns.split(","))
        args.out.mkdir(parents=True, exist_ok=True)
        convs = make_toy_corpus(
            args.toy, turns_range=(lo, hi), seed=args.seed, audio_dir=args.out
        )
        save_corpus(convs, args.out / "corpus.jsonl")
        print(f"wrote {len(convs)} conversations to {args.out / 'corpus.jsonl'}")
        return 0
    if not args.corpus:
        print("prepare needs --corpus or --toy", file=sys.stderr)
        return 2
    convs = load_corpus(args.corpus)
    turns = sum(len(c) for c in convs)
    words = sum(len(u.words) for c in convs for u in c.turns)
    annotated = sum(
        1 for c in convs for u in c.turns if u.emphasis_intensity is not None
    )
    print(
        f"{args.corpus}: {len(convs)} conversations, {turns} turns, "
        f"{words} words, {annotated} annotated turns"
    )
    try:
        from .corpus import emphasized_word_fraction

        frac = emphasized_word_fraction(convs)
        print(f"emphasized-word fraction (>0.5): {frac:.2%}")
    except Exception:
        pass
    return 0


def cmd_aggregate(args) -> int:
    from .corpus import apply_annotations, load_annotations, load_corpus, save_corpus

    convs = load_corpus(args.corpus)
    records = load_annotations(args.annotations)
    merged = apply_annotations(convs, records, quorum=args.quorum)
    save_corpus(merged, args.out)
    done = sum(1 for c in merged for u in c.turns if u.emphasis_intensity is not None)
    print(f"aggregated {len(records)} records; {done} turns now carry intensities")
    return 0


def cmd_kappa(args) -> int:
    from .corpus import load_annotations
    from .metrics import MetricsError, kappa_from_label_matrix

    records = load_annotations(args.annotations)
    by_turn: dict[tuple[str, int], list] = {}
    for rec in records:
        by_turn.setdefault((rec.conversation_id, rec.turn_index), []).append(rec)
    items: list[list[str]] = []
    for recs in by_turn.values():
        for w in range(len(recs[0].labels)):
            items.append([r.labels[w] for r in recs])
    if not items:
        print("no annotations found", file=sys.stderr)
        return 2
    try:
        kappa = kappa_from_label_matrix(items)
    except MetricsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if kappa is None:
        print("degenerate agreement: all ratings fall in one category")
    else:
        print(f"fleiss kappa over {len(items)} words: {kappa:.4f}")
    return 0


def cmd_train(args) -> int:
    from .corpus import load_corpus
    from .runner import load_checkpoint, train

    cfg = _config_from_args(args)
    convs = load_corpus(args.corpus)
    resume = load_checkpoint(args.resume) if args.resume else None
    state = train(
        cfg,
        convs,
        corpus_root=args.corpus.parent,
        resume=resume,
        checkpoint_path=args.out,
        verbose=True,
    )
    print(
        f"trained to step {state.step}; loss {state.loss_history[0]:.4f} -> "
        f"{state.loss_history[-1]:.4f}; checkpoint at {args.out}"
    )
    return 0


def cmd_predict(args) -> int:
    from .corpus import load_corpus
    from .runner import load_checkpoint, predict_dialogue

    state = load_checkpoint(args.checkpoint)
    convs = load_corpus(args.corpus)
    if args.conversation:
        convs = [c for c in convs if c.conversation_id == args.conversation]
        if not convs:
            print(f"no conversation {args.conversation!r}", file=sys.stderr)
            return 2
    results = {}
    for conv in convs:
        preds = predict_dialogue(
            state, conv, corpus_root=args.corpus.parent, gold_history=args.gold_history
        )
        results[conv.conversation_id] = preds
        for utt, p in zip(conv.turns, preds):
            rendered = " ".join(
                f"{w}({v:.2f})" for w, v in zip(utt.words, p)
            )
            print(f"{conv.conversation_id} turn {utt.index}: {rendered}")
    if args.out:
        args.out.write_text(json.dumps(results, indent=2))
    return 0


def cmd_synthesize(args) -> int:
    from .audio import save_wav
    from .corpus import load_corpus
    from .runner import load_checkpoint, synthesize

    state = load_checkpoint(args.checkpoint)
    convs = [
        c for c in load_corpus(args.corpus) if c.conversation_id == args.conversation
    ]
    if not convs:
        print(f"no conversation {args.conversation!r}", file=sys.stderr)
        return 2
    result = synthesize(
        state,
        convs[0],
        args.turn,
        corpus_root=args.corpus.parent,
        gold_history=args.gold_history,
        reconstruct_iterations=args.reconstruct,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.conversation}_turn{args.turn:02d}"
    np.save(args.out / f"{stem}_mel.npy", result.mel)
    report = {
        "conversation_id": result.conversation_id,
        "turn_index": result.turn_index,
        "words": list(result.words),
        "intensities": result.intensities,
        "durations": result.durations.tolist(),
        "word_frame_spans": result.word_frame_spans,
        "mel_frames": int(result.mel.shape[0]),
    }
    (args.out / f"{stem}_report.json").write_text(json.dumps(report, indent=2))
    if result.waveform is not None:
        save_wav(args.out / f"{stem}.wav", result.waveform)
    if args.plot:
        from .plots import plot_spectrogram

        spans = [
            span
            for span, v in zip(result.word_frame_spans, result.intensities)
            if v > 0.5
        ]
        plot_spectrogram(
            result.mel, None, spans, args.out / f"{stem}.png", title=stem
        )
    print(
        f"synthesized {stem}: {result.mel.shape[0]} frames; intensities "
        + " ".join(f"{w}={v:.2f}" for w, v in zip(result.words, result.intensities))
    )
    return 0


def cmd_evaluate(args) -> int:
    from .corpus import load_corpus
    from .runner import evaluate, load_checkpoint

    state = load_checkpoint(args.checkpoint)
    convs = load_corpus(args.corpus)
    results = evaluate(
        state, convs, corpus_root=args.corpus.parent, gold_history=args.gold_history
    )
    _print_metric_table([results])
    if args.out:
        args.out.write_text(json.dumps(results, indent=2))
    return 0


def cmd_sweep_context(args) -> int:
    from .corpus import load_corpus
    from .runner import sweep_context

    cfg = _config_from_args(args)
    convs = load_corpus(args.corpus)
    lengths = tuple(int(x) for x in args.lengths.split(","))
    rows = sweep_context(cfg, convs, lengths, corpus_root=args.corpus.parent)
    _print_metric_table(rows, lead="Length")
    if args.out:
        args.out.write_text(json.dumps(rows, indent=2))
    return 0


def cmd_ablate(args) -> int:
    from .runner import ablate

    cfg = ablate(_config_from_args(args), args.experiment)
    print(f"# ablation experiment {args.experiment}")
    print(dump_config(cfg), end="")
    if args.corpus:
        from .corpus import load_corpus
        from .runner import evaluate, train

        convs = load_corpus(args.corpus)
        state = train(cfg, convs, corpus_root=args.corpus.parent, checkpoint_path=args.out)
        results = evaluate(state, convs, corpus_root=args.corpus.parent, acoustic_mae=cfg.train_tts)
        _print_metric_table([results])
    return 0


def cmd_plot(args) -> int:
    from .corpus import binarize_intensity, load_corpus
    from .dataset import FeatureExtractor
    from .plots import emphasis_frame_spans, plot_spectrogram
    from .synthesizer import extract_targets

    convs = [
        c for c in load_corpus(args.corpus) if c.conversation_id == args.conversation
    ]
    if not convs:
        print(f"no conversation {args.conversation!r}", file=sys.stderr)
        return 2
    conv = convs[0]
    if not 1 <= args.turn <= len(conv.turns):
        print(f"turn {args.turn} out of range", file=sys.stderr)
        return 2
    utt = conv.turns[args.turn - 1]
    extractor = FeatureExtractor(config_for_preset("toy"), corpus_root=args.corpus.parent)
    wave = extractor.waveform(utt)
    if wave is None or utt.phoneme_durations is None:
        print("turn has no audio or durations to plot", file=sys.stderr)
        return 2
    targets = extract_targets(wave, utt.phoneme_durations)
    emphasized = (
        binarize_intensity(utt.emphasis_intensity)
        if utt.emphasis_intensity is not None
        else [False] * len(utt.words)
    )
    spans = emphasis_frame_spans(utt.word_phoneme_spans, targets.durations, emphasized)
    plot_spectrogram(
        targets.mel,
        targets.pitch,
        spans,
        args.out,
        title=f"{conv.conversation_id} turn {utt.index}: {utt.text}",
    )
    print(f"wrote {args.out}")
    return 0


def cmd_serve_annotation(args) -> int:
    import uvicorn

    from .annotation_service import AnnotationService, create_app
    from .corpus import load_corpus

    tokens = json.loads(args.tokens.read_text())
    service = AnnotationService(
        conversations=load_corpus(args.corpus),
        log_path=args.annotations,
        quorum=args.quorum,
        corpus_root=args.corpus.parent,
    )
    app = create_app(service, tokens)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "aggregate": cmd_aggregate,
    "kappa": cmd_kappa,
    "train": cmd_train,
    "predict": cmd_predict,
    "synthesize": cmd_synthesize,
    "evaluate": cmd_evaluate,
    "sweep-context": cmd_sweep_context,
    "ablate": cmd_ablate,
    "plot": cmd_plot,
    "serve-annotation": cmd_serve_annotation,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
