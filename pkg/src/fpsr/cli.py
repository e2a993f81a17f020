"""Command-line front end.

Subcommands: prepare, train, sr, eval, diffmap. Exit codes: 0 success,
1 usage/config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import data as D
from . import metrics as M
from . import trainer as T
from .autodiff import Tensor
from .errors import (CheckpointError, ConfigError, DataError, FpsrError,
                     NumericError)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    p = _Parser(prog="fpsr",
                description="Wavelet-domain sub-band GAN super-resolution toolkit",
                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    fmt = argparse.ArgumentDefaultsHelpFormatter

    sp = sub.add_parser("prepare", formatter_class=fmt,
                        help="build a paired LR/HR dataset with a manifest")
    sp.add_argument("--source", required=True,
                    help="image directory, or phantom:N for N synthetic phantoms")
    sp.add_argument("--out", required=True, help="output dataset directory")
    sp.add_argument("--scale", type=int, choices=(2, 4, 8), default=2,
                    help="super-resolution factor")
    sp.add_argument("--crop", type=int, default=64, help="HR center-crop size")
    sp.add_argument("--seed", type=int, default=0, help="split/phantom seed")
    sp.add_argument("--split", default="0.8/0.1/0.1",
                    help="train/val/test fractions")

    sp = sub.add_parser("train", formatter_class=fmt,
                        help="train a model from a config file")
    sp.add_argument("--config", required=True, help="config file (key = value)")
    sp.add_argument("--out", required=True, help="run directory")
    sp.add_argument("--resume", default=None, help="checkpoint to resume from")
    sp.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                    help="override a config value (repeatable)")
    sp.add_argument("--quiet", action="store_true", help="suppress progress lines")

    sp = sub.add_parser("sr", formatter_class=fmt,
                        help="super-resolve one image with a trained model")
    sp.add_argument("--model", required=True, help="checkpoint path")
    sp.add_argument("--input", required=True, help="input LR image (PNG/PGM)")
    sp.add_argument("--output", required=True, help="output PNG path")

    sp = sub.add_parser("eval", formatter_class=fmt,
                        help="evaluate a model over a manifest split")
    sp.add_argument("--model", required=True, help="checkpoint path")
    sp.add_argument("--manifest", required=True, help="dataset manifest")
    sp.add_argument("--csv", required=True, help="metrics CSV output path")
    sp.add_argument("--split", default="test", choices=("train", "val", "test"),
                    help="which split to evaluate")
    sp.add_argument("--baselines", action="store_true",
                    help="also report bicubic and bilinear upsampling")
    sp.add_argument("--images", default=None,
                    help="directory for heatmaps and sample panels")

    sp = sub.add_parser("diffmap", formatter_class=fmt,
                        help="write the |a-b| difference heatmap of two images")
    sp.add_argument("--a", required=True, help="first image")
    sp.add_argument("--b", required=True, help="second image")
    sp.add_argument("--out", required=True, help="output PNG path")
    return p


def _write_effective_config(path, lines):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{k} = {v}\n" for k, v in lines), encoding="utf-8")


def cmd_prepare(args):
    if args.source.startswith("phantom:"):
        try:
            count = int(args.source.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad phantom spec {args.source!r}, want phantom:N")
        source, phantoms = None, count
    else:
        source, phantoms = args.source, None
    try:
        fractions = tuple(float(tok) for tok in args.split.replace(",", "/").split("/"))
    except ValueError:
        raise ConfigError(f"bad split spec {args.split!r}")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-6:
        raise ConfigError(f"split fractions must be three values summing to 1, "
                          f"got {args.split!r}")
    manifest = D.build_dataset(source, args.out, args.scale, args.crop,
                               args.seed, splits=fractions, phantom_count=phantoms)
    _write_effective_config(Path(args.out) / "effective-config.ini", [
        ("source", args.source), ("out", args.out), ("scale", args.scale),
        ("crop", args.crop), ("seed", args.seed), ("split", args.split)])
    counts = {}
    for rec in manifest.records:
        counts[rec.split] = counts.get(rec.split, 0) + 1
    print(f"wrote {len(manifest.records)} pairs to {args.out} "
          f"(splits: {counts})")
    return EXIT_OK


def cmd_train(args):
    cfg = cfgmod.load_file(args.config)
    cfgmod.apply_overrides(cfg, args.set)
    log = None if args.quiet else print
    final = T.train(cfg, args.out, resume=args.resume, log=log)
    print(f"final checkpoint: {final}")
    return EXIT_OK


def cmd_sr(args):
    state = T.load_checkpoint(args.model)
    img = D.load_grayscale(args.input)
    h, w = img.shape[-2], img.shape[-1]
    if h % 2 or w % 2:
        raise DataError(f"input must have even sides, got {h}x{w}")
    sr, _, _ = state.model.forward(img)
    out = Tensor(np.clip(sr.data, 0.0, 1.0))
    D.save_grayscale(out, args.output, bitdepth=16)
    _write_effective_config(Path(str(args.output) + ".cfg"), [
        ("model", args.model), ("input", args.input), ("output", args.output),
        ("scale", state.cfg.scale)])
    print(f"{args.input} ({h}x{w}) -> {args.output} "
          f"({sr.shape[-2]}x{sr.shape[-1]})")
    return EXIT_OK


def cmd_eval(args):
    state = T.load_checkpoint(args.model)
    manifest = D.load_manifest(args.manifest)
    ids, aggregates = T.evaluate(state.model, manifest, args.split,
                                 baselines=args.baselines,
                                 out_images=args.images)
    T.write_metrics_csv(args.csv, ids, aggregates)
    _write_effective_config(Path(str(args.csv) + ".cfg"), [
        ("model", args.model), ("manifest", args.manifest), ("csv", args.csv),
        ("split", args.split), ("baselines", args.baselines),
        ("images", args.images)])
    for method, agg in aggregates.items():
        print(f"{method}: psnr {agg.psnr_mean:.4f} +- {agg.psnr_std:.4f} dB, "
              f"ssim {agg.ssim_mean:.6f} +- {agg.ssim_std:.6f}")
    return EXIT_OK


def cmd_diffmap(args):
    a = D.load_grayscale(args.a)
    b = D.load_grayscale(args.b)
    hm = M.diff_heatmap(a, b)
    M.save_heatmap_png(hm, args.out)
    _write_effective_config(Path(str(args.out) + ".cfg"), [
        ("a", args.a), ("b", args.b), ("out", args.out)])
    print(f"wrote {args.out} (max |a-b| = {float(np.abs(a.data - b.data).max()):.6g})")
    return EXIT_OK


_COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "sr": cmd_sr,
    "eval": cmd_eval,
    "diffmap": cmd_diffmap,
}


def run(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError,) as exc:
        print(f"fpsr: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as exc:
        print(f"fpsr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"fpsr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FpsrError as exc:
        print(f"fpsr: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
