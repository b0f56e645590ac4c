"""Command-line entry points.

Exit codes: 0 success, 2 when any input was degenerate (logged per file,
directory runs continue past the bad file), 1 for everything else.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .backends import build_toy_backend, load_external_backend
from .codec import build_toy_codec
from .datasets import (
    read_manifest,
    scan_paired,
    unpaired_records,
    write_manifest,
)
from .errors import DegenerateChannelError, DegenerateInputError, RelumeError
from .harness import (
    VARIANTS,
    run_ablation,
    run_awb_eval,
    run_channel_alignment,
    run_eval,
    variant_config,
)
from .images import load_image, save_image
from .pipeline import PipelineConfig, enhance, load_config_file
from .synthetic import write_boxed_corpus, write_paired_corpus

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DEGENERATE = 2

_TOY_WEIGHT_SEED = 0  # weights are reproducible from this seed alone


def _add_backend_flags(sub):
    sub.add_argument("--backend", choices=("toy", "external"), default="toy")
    sub.add_argument("--external-module", metavar="MODULE:FACTORY", default=None,
                     help="factory for --backend external")


def _add_run_flags(sub):
    sub.add_argument("--manifest", required=True, type=Path)
    sub.add_argument("--config", type=Path, default=None)
    sub.add_argument("--out", required=True, type=Path)
    sub.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    _add_backend_flags(sub)


def _resolve_config(args) -> PipelineConfig:
    cfg = load_config_file(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "variant", None):
        cfg = variant_config(cfg, args.variant)
    return cfg


def _resolve_backend(args):
    if args.backend == "external":
        if not args.external_module:
            raise RelumeError("--backend external requires --external-module")
        return load_external_backend(args.external_module)
    return build_toy_backend(seed=_TOY_WEIGHT_SEED)


def _cmd_enhance(args) -> int:
    cfg = _resolve_config(args)
    codec = build_toy_codec()
    backend = _resolve_backend(args)
    src = Path(args.input)
    records = unpaired_records(src) if src.is_dir() else None
    args.output.mkdir(parents=True, exist_ok=True)
    worst = EXIT_OK
    targets = [(r.id, r.input) for r in records] if records else [(src.stem, src)]
    for stem, path in targets:
        try:
            out = enhance(load_image(path), cfg, codec, backend)
        except (DegenerateInputError, DegenerateChannelError) as exc:
            log.error("skipping %s: %s", path, exc)
            worst = EXIT_DEGENERATE
            continue
        save_image(out, args.output / f"{stem}.png")
        log.info("wrote %s", args.output / f"{stem}.png")
    return worst


def _cmd_evaluate(args) -> int:
    result = run_eval(read_manifest(args.manifest), _resolve_config(args),
                      args.out, build_toy_codec(), _resolve_backend(args))
    log.info("report: %s", result.report_path)
    return EXIT_OK if result.ok else EXIT_DEGENERATE


def _cmd_awb_eval(args) -> int:
    result = run_awb_eval(read_manifest(args.manifest), _resolve_config(args),
                          args.out, build_toy_codec(), _resolve_backend(args),
                          enhance_enabled=not args.no_enhance)
    log.info("report: %s", result.report_path)
    return EXIT_OK if result.ok else EXIT_DEGENERATE


def _cmd_ablate(args) -> int:
    variants = [v.strip() for v in args.variants.split(",")] if args.variants else None
    results = run_ablation(read_manifest(args.manifest), _resolve_config(args),
                           args.out, build_toy_codec(), _resolve_backend(args),
                           variants=variants)
    log.info("summary: %s", args.out / "summary.csv")
    return EXIT_OK if all(r.ok for r in results.values()) else EXIT_DEGENERATE


def _cmd_channel_align(args) -> int:
    out = run_channel_alignment(read_manifest(args.manifest), _resolve_config(args),
                                args.out, build_toy_codec(), _resolve_backend(args))
    log.info("modes: %s", ",".join(out["modes"]))
    return EXIT_OK if not out["failures"] else EXIT_DEGENERATE


def _cmd_make_corpus(args) -> int:
    writer = write_boxed_corpus if args.kind == "boxed" else write_paired_corpus
    input_dir, gt_dir = writer(args.out, count=args.count, size=args.size)
    log.info("wrote %d scenes under %s and %s", args.count, input_dir, gt_dir)
    return EXIT_OK


def _cmd_manifest(args) -> int:
    if args.gt:
        records = scan_paired(args.input, args.gt, mask_dir=args.mask,
                              allow_unmatched=args.allow_unmatched)
    else:
        records = unpaired_records(args.input)
    write_manifest(records, args.out)
    log.info("wrote %d records to %s", len(records), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relume")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("enhance", help="enhance one image or a directory")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variant", choices=sorted(VARIANTS), default=None)
    _add_backend_flags(p)
    p.set_defaults(func=_cmd_enhance)

    p = subs.add_parser("evaluate", help="paired PSNR/SSIM evaluation")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = subs.add_parser("awb-eval", help="white-balance metrics with box masking")
    _add_run_flags(p)
    p.add_argument("--no-enhance", action="store_true",
                   help="score raw inputs instead of enhanced outputs")
    p.set_defaults(func=_cmd_awb_eval)

    p = subs.add_parser("ablate", help="run the config-variant matrix")
    _add_run_flags(p)
    p.add_argument("--variants", default=None,
                   help="comma-separated subset (default: all)")
    p.set_defaults(func=_cmd_ablate)

    p = subs.add_parser("channel-align", help="per-channel style alignment sweep")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_channel_align)

    p = subs.add_parser("make-corpus", help="write a synthetic paired corpus")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--kind", choices=("paired", "boxed"), default="paired")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=32)
    p.set_defaults(func=_cmd_make_corpus)

    p = subs.add_parser("manifest", help="scan directories into a manifest CSV")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--gt", type=Path, default=None)
    p.add_argument("--mask", type=Path, default=None)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--allow-unmatched", action="store_true")
    p.set_defaults(func=_cmd_manifest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RelumeError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
