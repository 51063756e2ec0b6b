"""``kws`` command line: train | adapt | ablate | report."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .audio import AudioClip, load_wav
from .errors import KwsError, UsageError
from .wavelet import tau_csv


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float, help="spectral denoise mixing weight")
    p.add_argument("--snr", help="comma-separated SNRs in dB")
    p.add_argument("--env", help="comma-separated environments")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="parallel environment x SNR cells")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kws", description="continual-learning keyword spotting")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train, quantize and write a checkpoint")
    _common(p)

    p = sub.add_parser("adapt", help="adapt on noisy streams and write metrics.csv")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint directory (default <out>/checkpoint)")
    p.add_argument("--resume", metavar="STATE_DIR", help="continue one cell from its snapshot")

    p = sub.add_parser("ablate", help="parameter sweeps")
    _common(p)
    p.add_argument("--sweep", required=True, choices=harness.SWEEPS)

    p = sub.add_parser("report", help="summarize metrics CSVs")
    p.add_argument("metrics_dir")
    p.add_argument("--plot", action="store_true", help="write PNG line plots for sweeps")

    p = sub.add_parser("tau", help="per-frame MAD and threshold of a WAV file as CSV")
    p.add_argument("wav")
    return parser


def config_from(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.alpha is not None:
        overrides["denoise.alpha"] = str(args.alpha)
    if args.snr:
        overrides["snrs_db"] = args.snr
    if args.env:
        overrides["environments"] = args.env
    if args.out:
        overrides["output_dir"] = args.out
    if args.jobs is not None:
        overrides["jobs"] = str(args.jobs)
    return harness.config_from_args(args.config, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except KwsError as exc:
        print(f"kws: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1


def _dispatch(args) -> int:
    if args.command == "report":
        print(harness.cmd_report(args.metrics_dir, plot=args.plot), end="")
        return 0
    if args.command == "tau":
        clip: AudioClip = load_wav(args.wav)
        print(tau_csv(clip), end="")
        return 0
    if args.command == "adapt" and args.resume:
        cell = harness.cmd_resume(args.resume, args.checkpoint, args.out)
        out = Path(args.out or Path(args.resume).parent.parent)
        harness.write_outputs(out, [cell])
        print(harness.render_grid(*harness.summary_grid([cell.summary()]), title="final-interval accuracy (%)"), end="")
        return 0
    cfg = config_from(args)
    if args.command == "train":
        report = harness.cmd_train(cfg)
        print(f"clean accuracy: float {100 * report['clean_accuracy_float']:.2f}%  "
              f"int8 {100 * report['clean_accuracy_int8']:.2f}%")
        print(f"checkpoint sha256: {report['model_sha256']}")
        return 0
    if args.command == "adapt":
        cells = harness.cmd_adapt_eval(cfg, args.checkpoint)
        rows = [c.summary() for c in cells]
        print(harness.render_grid(*harness.summary_grid(rows), title="final-interval accuracy (%)"), end="")
        return 0
    if args.command == "ablate":
        rows = harness.cmd_ablate(cfg, args.sweep)
        for (env, snr), spread in sorted(harness.sweep_spread(rows).items()):
            print(f"{args.sweep} {env} {snr:g} dB: spread {100 * spread:.2f} points")
        return 0
    raise UsageError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
