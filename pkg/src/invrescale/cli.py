"""Command-line entry point: ``invrescale <command> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import checkpoint
from .backbone import DivergenceError, param_count
from .config import ConfigError, TrainConfig, apply_overrides, format_text, load_config
from .imageio import Image, list_images, read_image, write_image
from .losses import psnr, ssim
from .pipeline import RescalingModel, bicubic_round_trip, load_model
from .resample import ScalePair, output_size
from .selfcheck import run_all
from .train import Trainer

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED, EXIT_CHECK_FAILED = 0, 2, 3, 4, 1

log = logging.getLogger("invrescale")


class UsageError(Exception):
    pass


# -- scale grammar -------------------------------------------------------------------


def _number(text: str) -> Decimal:
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise UsageError(f"not a number: {text!r}") from None
    if not value.is_finite() or value <= 0:
        raise UsageError(f"scale must be a positive finite number, got {text!r}")
    return value


def parse_scale(text: str) -> ScalePair:
    """``"2.5"`` -> symmetric; ``"2.0x3.0"`` -> horizontal x vertical."""
    parts = text.lower().split("x")
    if len(parts) == 1:
        return ScalePair.symmetric(float(_number(parts[0])))
    if len(parts) == 2:
        return ScalePair(float(_number(parts[0])), float(_number(parts[1])))
    raise UsageError(f"malformed scale {text!r}")


def parse_scale_list(text: str) -> list[ScalePair]:
    """Comma-separated scales; each item may also be a ``lo:hi:step`` sweep (inclusive)."""
    out: list[ScalePair] = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        if ":" not in item:
            out.append(parse_scale(item))
            continue
        bits = item.split(":")
        if len(bits) != 3:
            raise UsageError(f"sweep must be lo:hi:step, got {item!r}")
        lo, hi, step = (_number(b) for b in bits)
        if hi < lo:
            raise UsageError(f"empty sweep {item!r}")
        # decimal arithmetic so 1.1:4.0:0.1 yields exactly 30 points
        n = int((hi - lo) / step) + 1
        out.extend(ScalePair.symmetric(float(lo + i * step)) for i in range(n))
    if not out:
        raise UsageError("no scales given")
    return out


# -- helpers -------------------------------------------------------------------------


def _rgb(img: Image) -> np.ndarray:
    return np.repeat(img.data, 3, axis=0) if img.channels == 1 else img.data


def _read_rgb(path) -> np.ndarray:
    return _rgb(read_image(path))


def _load_training_images(directory: Path) -> list[np.ndarray]:
    paths = list_images(directory)
    if not paths:
        raise FileNotFoundError(f"no PNG/PPM images in {directory}")
    return [_read_rgb(p) for p in paths]


def _parse_size(text: Optional[str]) -> Optional[tuple[int, int]]:
    if text is None:
        return None
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"size must be WxH, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise UsageError(f"size must be positive, got {text!r}")
    return h, w


def _overrides(pairs: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# -- commands ------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else TrainConfig()
    cfg = apply_overrides(cfg, _overrides(args.set))
    images = _load_training_images(Path(args.data))
    trainer = Trainer(cfg, images)
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log")
    with open(log_path, "w", encoding="utf-8") as fh:
        trainer.fit(log=fh)
    trainer.model.save(out)
    last = trainer.history[-1] if trainer.history else None
    print(f"trained {trainer.iteration} iterations, {param_count(cfg.backbone)} parameters -> {out}")
    if last is not None:
        print(f"final loss {last.total:.6g} (l_r {last.l_r:.6g})")
    return EXIT_OK


def cmd_downscale(args) -> int:
    model = load_model(args.ckpt)
    scale = parse_scale(args.scale)
    x = _read_rgb(args.input)
    y_lr, _, real = model.downscale(x, scale)
    write_image(args.output, Image(y_lr))
    print(f"realized scale {real.s_h:.6g}x{real.s_v:.6g}, output {y_lr.shape[2]}x{y_lr.shape[1]}")
    return EXIT_OK


def cmd_upscale(args) -> int:
    model = load_model(args.ckpt)
    y = _read_rgb(args.input)
    size = _parse_size(args.size)
    if size is None:
        size = output_size(y.shape[1], y.shape[2], parse_scale(args.scale), "up")
    out = model.upscale(y, size)
    write_image(args.output, Image(out))
    print(f"output {size[1]}x{size[0]}")
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    model = load_model(args.ckpt)
    x = _read_rgb(args.input)
    x_hat, y_lr = model.round_trip(x, parse_scale(args.scale))
    write_image(args.output, Image(x_hat))
    if args.lr_output:
        write_image(args.lr_output, Image(y_lr))
    print(f"psnr_y {psnr(x_hat, x):.4f} psnr_rgb {psnr(x_hat, x, 'rgb'):.4f} ssim {ssim(x_hat, x):.6f}")
    return EXIT_OK


EVAL_COLUMNS = ["scale_h", "scale_v", "psnr_y", "psnr_rgb", "ssim", "base_psnr_y", "base_ssim"]


def evaluate(model: RescalingModel, images: Sequence[np.ndarray], scales: Sequence[ScalePair]) -> list[dict]:
    rows = []
    for s in scales:
        acc = np.zeros(5)
        for x in images:
            x_hat, _ = model.round_trip(x, s)
            x_hat = np.clip(x_hat, 0.0, 1.0)
            base = np.clip(bicubic_round_trip(x, s), 0.0, 1.0)
            acc += [psnr(x_hat, x), psnr(x_hat, x, "rgb"), ssim(x_hat, x), psnr(base, x), ssim(base, x)]
        mean = acc / len(images)
        rows.append(dict(zip(EVAL_COLUMNS, [s.s_h, s.s_v, *mean])))
    return rows


def cmd_eval(args) -> int:
    scales = parse_scale_list(args.scales)
    model = load_model(args.ckpt)
    paths = list_images(args.data)
    if not paths:
        raise FileNotFoundError(f"no PNG/PPM images in {args.data}")
    rows = evaluate(model, [_read_rgb(p) for p in paths], scales)
    header = f"{'scale':>9} {'psnr_y':>8} {'psnr_rgb':>8} {'ssim':>7} {'base_y':>8} {'base_ssim':>9}"
    print(header)
    for r in rows:
        label = str(ScalePair(r["scale_h"], r["scale_v"]))
        print(
            f"{label:>9} {r['psnr_y']:8.3f} {r['psnr_rgb']:8.3f} {r['ssim']:7.4f} "
            f"{r['base_psnr_y']:8.3f} {r['base_ssim']:9.4f}"
        )
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS)
            writer.writeheader()
            for r in rows:
                writer.writerow({k: f"{v:.6f}" for k, v in r.items()})
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    failures = 0
    for res in run_all(wide=args.float64):
        failures += not res.ok
        print(f"{'PASS' if res.ok else 'FAIL'} {res.name:<18} {res.seconds:6.2f}s  {res.detail}")
    if args.ckpt:
        try:
            checkpoint.load(args.ckpt)
            print(f"PASS checkpoint_file      {args.ckpt}")
        except (checkpoint.CheckpointError, OSError) as exc:
            failures += 1
            print(f"FAIL checkpoint_file      {exc}")
    print("all checks passed" if not failures else f"{failures} check(s) failed")
    return EXIT_OK if not failures else EXIT_CHECK_FAILED


def cmd_info(args) -> int:
    if args.ckpt:
        cfg, params = checkpoint.load(args.ckpt)
        stored = sum(int(np.prod(v.shape)) for v in params.values())
        print(f"checkpoint {args.ckpt}: {len(params)} tensors, {stored} stored scalars")
    else:
        cfg = load_config(args.config) if args.config else TrainConfig()
        cfg = apply_overrides(cfg, _overrides(args.set))
    print(f"param_count = {param_count(cfg.backbone)}")
    sys.stdout.write(format_text(cfg))
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="invrescale", description="Arbitrary-scale invertible image rescaling.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model on a directory of PNG/PPM images")
    p.add_argument("data")
    p.add_argument("-o", "--out", required=True, help="checkpoint path")
    p.add_argument("-c", "--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--log", help="loss log path (default: <out>.log)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("downscale", help="HR image -> LR image")
    p.add_argument("ckpt")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("-s", "--scale", required=True, help='"2.5" or "HxV" such as "2.0x3.0"')
    p.set_defaults(func=cmd_downscale)

    p = sub.add_parser("upscale", help="LR image -> HR image (latent set to zero)")
    p.add_argument("ckpt")
    p.add_argument("input")
    p.add_argument("output")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("-s", "--scale")
    g.add_argument("--size", help="target WxH")
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("roundtrip", help="downscale then upscale, reporting PSNR/SSIM")
    p.add_argument("ckpt")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("-s", "--scale", required=True)
    p.add_argument("--lr-output", help="also write the intermediate LR image")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("eval", help="metrics table over a dataset and a list of scales")
    p.add_argument("ckpt")
    p.add_argument("data")
    p.add_argument("-s", "--scales", required=True, help='e.g. "1.5,2.5,3.5" or "1.1:4.0:0.1"')
    p.add_argument("--csv", help="write the table as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfcheck", help="run the built-in invariant suites")
    p.add_argument("--float64", action="store_true", help="64-bit mode with tighter tolerances")
    p.add_argument("--ckpt", help="also validate this checkpoint file")
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("info", help="print parameter count and configuration")
    p.add_argument("ckpt", nargs="?")
    p.add_argument("-c", "--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"invrescale: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"invrescale: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, checkpoint.CheckpointError) as exc:
        print(f"invrescale: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invrescale: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
