"""Command-line interface: simulate | beamform | evaluate | analyze | wer."""

from __future__ import annotations

import argparse
import logging
import sys

from .metrics import tokenize, wer
from .pipeline import (
    BeamformOptions,
    ConfigError,
    DataError,
    PipelineConfig,
    cmd_analyze,
    cmd_beamform,
    cmd_evaluate,
    cmd_simulate,
    load_config,
)
from .signal_core import StftConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arraysep",
        description="Simulate multichannel overlapped speech, separate it with "
        "mask-based MVDR beamforming, and evaluate the results.",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads per stage")
    parser.add_argument("--verbose", action="store_true", help="log progress and file reads")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render mixtures and write a manifest")
    p_sim.add_argument("--config", help="JSON pipeline configuration file")
    p_sim.add_argument("--num-utts", type=int, default=None)
    p_sim.add_argument("--out-dir", required=True)

    p_beam = sub.add_parser("beamform", help="separate each manifest utterance")
    p_beam.add_argument("--manifest", required=True)
    p_beam.add_argument("--out-dir", required=True)
    p_beam.add_argument("--mask", default="irm", help="irm | ibm | cirm | external:<dir>")
    p_beam.add_argument("--noise-mask", choices=["complement", "oracle"], default="complement")
    p_beam.add_argument("--method", choices=["mvdr", "masking"], default="mvdr")
    p_beam.add_argument("--diag-loading", type=float, default=1e-6)
    p_beam.add_argument("--adapt-mode", choices=["none", "enroll", "enroll-free"], default="none")
    p_beam.add_argument("--fusion", choices=["none", "input-bias", "act-scale"], default="none")
    p_beam.add_argument("--embedding-dir", default=None, help="external embedding files (<id>.emb)")
    p_beam.add_argument("--params", default=None, help="front-end parameter file (.npz)")
    p_beam.add_argument("--dump-masks", action="store_true")
    p_beam.add_argument("--dump-activations", action="store_true")

    p_eval = sub.add_parser("evaluate", help="score enhanced audio")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--metrics", default="sisnr,stoi", help="comma list: sisnr,stoi[,wer]")
    p_eval.add_argument("--ref", default=None, help="reference transcripts (id text per line)")
    p_eval.add_argument("--hyp", default=None, help="hypothesis transcripts (id text per line)")
    p_eval.add_argument("--out", required=True, help="report file (line-delimited records)")

    p_ana = sub.add_parser("analyze", help="cosine-similarity correlation analysis")
    p_ana.add_argument("--report", required=True)
    p_ana.add_argument("--out-dir", required=True)

    p_wer = sub.add_parser("wer", help="score transcript files")
    p_wer.add_argument("--ref", required=True)
    p_wer.add_argument("--hyp", required=True)
    return parser


def _cmd_simulate(args) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.num_utts is not None:
        overrides["num_utterances"] = args.num_utts
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    manifest_path = cmd_simulate(config, args.out_dir, threads=args.threads)
    print(manifest_path)
    return EXIT_OK


def _cmd_beamform(args) -> int:
    options = BeamformOptions(
        mask=args.mask,
        noise_mask=args.noise_mask,
        method=args.method,
        diag_loading=args.diag_loading,
        adapt_mode=args.adapt_mode,
        fusion=args.fusion,
        embedding_dir=args.embedding_dir,
        params_path=args.params,
        dump_masks=args.dump_masks,
        dump_activations=args.dump_activations,
    )
    manifest_path = cmd_beamform(args.manifest, args.out_dir, options, threads=args.threads)
    print(manifest_path)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    metric_names = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    report = cmd_evaluate(
        args.manifest,
        metric_names,
        out_path=args.out,
        ref_transcripts=args.ref,
        hyp_transcripts=args.hyp,
        threads=args.threads,
    )
    aggregates = report.aggregates()["overall"]
    line = " ".join(f"{k}={v:.4f}" for k, v in sorted(aggregates.items()) if k != "count")
    print(f"utterances={aggregates['count']} {line}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    summary = cmd_analyze(args.report, args.out_dir)
    for key in sorted(summary):
        print(f"{key}\t{summary[key]}")
    return EXIT_OK


def _cmd_wer(args) -> int:
    try:
        with open(args.ref, encoding="utf-8") as fh:
            refs = fh.read().splitlines()
        with open(args.hyp, encoding="utf-8") as fh:
            hyps = fh.read().splitlines()
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    if len(refs) != len(hyps):
        raise DataError("reference and hypothesis files differ in line count")
    total = {"substitutions": 0, "deletions": 0, "insertions": 0, "words": 0}
    per_utt = []
    for ref_line, hyp_line in zip(refs, hyps):
        breakdown = wer(tokenize(ref_line), tokenize(hyp_line))
        per_utt.append(breakdown.wer)
        total["substitutions"] += breakdown.substitutions
        total["deletions"] += breakdown.deletions
        total["insertions"] += breakdown.insertions
        total["words"] += breakdown.reference_length
    mean_wer = sum(per_utt) / len(per_utt)
    print(
        f"utterances={len(per_utt)} mean_wer={mean_wer:.4f} "
        f"S={total['substitutions']} D={total['deletions']} I={total['insertions']} "
        f"N={total['words']}"
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handlers = {
        "simulate": _cmd_simulate,
        "beamform": _cmd_beamform,
        "evaluate": _cmd_evaluate,
        "analyze": _cmd_analyze,
        "wer": _cmd_wer,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
