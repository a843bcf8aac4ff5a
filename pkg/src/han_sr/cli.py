"""Command-line entry point: train, eval, infer, degrade.

Exit codes: 0 success, 2 configuration errors, 3 I/O errors (missing or
corrupt files), 4 numerical failures. `HAN_SEED` overrides the config seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint
from .config import RunConfig, load_config, parse_config
from .data import (BD, BI, DecodeError, Image, RGB, UnsupportedFormatError,
                   crop_to_multiple, decode_png, degrade, encode_png)
from .metrics import EmptyDatasetError, evaluate_dataset, report_csv, report_text, \
    self_ensemble
from .model import ConfigError, ModelConfig, init_params, super_resolve
from .tensor import NonFiniteError
from .train import NumericalError, degradation_spec, params_from_arrays, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _load_model(ckpt_path):
    config_str, arrays = load_checkpoint(ckpt_path)
    run_cfg = parse_config(config_str)
    model_cfg = run_cfg.model_config()
    expected = {name for name, _ in init_params(model_cfg, 0).named()}
    if expected != set(arrays):
        raise CheckpointError("checkpoint parameters do not match its config")
    return params_from_arrays(arrays), model_cfg, run_cfg


def _forward_fn(params, model_cfg: ModelConfig, ensemble: bool):
    def forward(img: Image) -> Image:
        return Image(super_resolve(params, model_cfg, img.planes), RGB)

    if not ensemble:
        return forward
    return lambda img: self_ensemble(forward, img)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    env_seed = os.environ.get("HAN_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"HAN_SEED must be an integer, got {env_seed!r}") from None
    result = train(cfg)
    print(f"wrote checkpoint {result.checkpoint_path} "
          f"(final loss {result.final_loss:.6f}, log {result.log_path})")
    return EXIT_OK


def cmd_eval(args) -> int:
    params, model_cfg, run_cfg = _load_model(args.checkpoint)
    if args.scale is not None and args.scale != model_cfg.scale:
        raise ConfigError(f"--scale {args.scale} does not match the checkpoint "
                          f"(x{model_cfg.scale})")
    run_cfg.degradation = args.degradation
    spec = degradation_spec(run_cfg)
    forward = _forward_fn(params, model_cfg, args.self_ensemble)
    report = evaluate_dataset(forward, args.dataset, spec, crop=args.crop)
    print(report_text(report))
    if args.csv:
        Path(args.csv).write_text(report_csv(report), encoding="utf-8")
    return EXIT_OK


def cmd_infer(args) -> int:
    params, model_cfg, _ = _load_model(args.checkpoint)
    image = decode_png(Path(args.input).read_bytes())
    forward = _forward_fn(params, model_cfg, args.self_ensemble)
    sr = forward(image)
    Path(args.output).write_bytes(encode_png(sr))
    print(f"wrote {args.output} ({sr.width}x{sr.height})")
    return EXIT_OK


def cmd_degrade(args) -> int:
    spec = degradation_spec(RunConfig(
        scale=args.scale, degradation=args.degradation,
        blur_ksize=args.blur_ksize, blur_sigma=args.blur_sigma))
    hr_dir = Path(args.hr_dir)
    files = sorted(hr_dir.glob("*.png"))
    if not files:
        raise FileNotFoundError(f"no PNG files in {hr_dir}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in files:
        hr = crop_to_multiple(decode_png(path.read_bytes()), spec.scale)
        (out_dir / path.name).write_bytes(encode_png(degrade(hr, spec)))
    print(f"degraded {len(files)} image(s) into {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="han",
        description="Holistic attention network for single-image super-resolution")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from a key = value config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on <dataset>/HR/*.png")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--degradation", choices=(BI, BD), default=BI)
    p.add_argument("--self-ensemble", action="store_true")
    p.add_argument("--crop", type=int, default=None,
                   help="border pixels to ignore (default: the scale)")
    p.add_argument("--csv", default=None, help="also write per-image scores here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="upscale one PNG")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--self-ensemble", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("degrade", help="synthesize LR images from an HR directory")
    p.add_argument("hr_dir")
    p.add_argument("out_dir")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--degradation", choices=(BI, BD), default=BI)
    p.add_argument("--blur-ksize", type=int, default=7)
    p.add_argument("--blur-sigma", type=float, default=1.6)
    p.set_defaults(func=cmd_degrade)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, DecodeError, UnsupportedFormatError,
            EmptyDatasetError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, NonFiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
