"""Command-line entry point: ``rindnet {train,predict,eval,plot}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from rindnet.config import EDGE_TYPES, dump_config, load_config
from rindnet.errors import ConfigError, DataError, NumericError, RindError, WeightLoadError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("rindnet")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat 'key = value' config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--data", type=Path, help="dataset root (images/, labels/, train.lst, test.lst)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                   help="deterministic mode (default: on)")
    p.add_argument("--limit", type=int, help="use only the first N ids of the split")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rindnet", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    _add_common(p)
    p.add_argument("--epochs", type=int, help="number of epochs (overrides config)")
    p.add_argument("--pretrained", type=Path, help="ResNet-50 weight archive for the backbone")
    p.add_argument("--resume", type=Path, help="checkpoint to resume from")

    p = sub.add_parser("predict", help="write 16-bit PNG edge maps for a split")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--role", choices=("train", "test"), default="test")

    p = sub.add_parser("eval", help="ODS/OIS/AP of predicted maps against ground truth")
    _add_common(p)
    p.add_argument("--pred", type=Path, required=True, help="directory with <id>_<type>.png maps")
    p.add_argument("--role", choices=("train", "test"), default="test")
    p.add_argument("--types", nargs="+", default=list(EDGE_TYPES),
                   choices=list(EDGE_TYPES) + ["generic"])
    p.add_argument("--max-dist-frac", type=float, default=0.0075,
                   help="match tolerance as a fraction of the image diagonal")
    p.add_argument("--n-thresholds", type=int, default=99)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("plot", help="render PR curves from pr_<type>.csv files")
    p.add_argument("--pr-dir", type=Path, required=True)
    p.add_argument("--out", type=Path)
    return parser


def _effective(args):
    overrides = list(args.overrides)
    if getattr(args, "epochs", None) is not None:
        overrides.append(f"epochs={args.epochs}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.deterministic is not None:
        overrides.append(f"deterministic={args.deterministic}")
    return load_config(args.config, overrides)


def _echo(args, model_cfg, train_cfg) -> str:
    head = [f"# rindnet {args.command}"]
    for k, v in sorted(vars(args).items()):
        if k in ("overrides", "config", "command", "verbose") or v is None:
            continue
        head.append(f"# --{k.replace('_', '-')} {' '.join(map(str, v)) if isinstance(v, list) else v}")
    text = "\n".join(head) + "\n" + dump_config(model_cfg, train_cfg)
    print(text, end="", flush=True)
    return text


def _split(args, role):
    from rindnet.dataio import load_split

    if args.data is None:
        raise DataError("--data is required")
    return load_split(args.data, role).limit(args.limit)


def cmd_train(args) -> int:
    from rindnet.model import build_model
    from rindnet.trainer import fit, set_deterministic

    model_cfg, train_cfg = _effective(args)
    text = _echo(args, model_cfg, train_cfg)
    split = _split(args, "train")
    out = args.out or Path("runs/train")
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.txt").write_text(text)
    set_deterministic(train_cfg.seed, train_cfg.deterministic)
    model = build_model(model_cfg, args.pretrained)
    result = fit(model, split, train_cfg, out, resume=args.resume)
    if result.curve:
        last = result.curve[-1]
        print(f"done: epoch {last['epoch']} total {last['total']:.4f} -> {result.checkpoint}")
    else:
        print(f"done: no epochs run -> {result.checkpoint}")
    return EXIT_OK


def cmd_predict(args) -> int:
    from rindnet.dataio import encode_prediction
    from rindnet.model import load_checkpoint, predict
    from rindnet.trainer import set_deterministic

    model_cfg, train_cfg = _effective(args)
    model, manifest = load_checkpoint(args.checkpoint)
    _echo(args, model.config, train_cfg)
    set_deterministic(train_cfg.seed, train_cfg.deterministic)
    split = _split(args, args.role)
    out = args.out or Path("runs/predict")
    out.mkdir(parents=True, exist_ok=True)
    names = ("generic",) if model.config.generic_mode else EDGE_TYPES
    for sid in split.ids:
        sample = split.load(sid)
        maps = predict(model, torch.from_numpy(sample.image)).numpy().astype(np.float64)
        for name, m in zip(names, maps):
            encode_prediction(np.clip(m, 0.0, 1.0), out / f"{sid}_{name}.png")
    print(f"wrote {len(split.ids) * len(names)} maps to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from rindnet.evalbench import EvalParams, evaluate_dataset, format_summary

    model_cfg, train_cfg = _effective(args)
    _echo(args, model_cfg, train_cfg)
    if args.n_thresholds < 1:
        raise ConfigError("--n-thresholds must be positive")
    thresholds = tuple(float(t) for t in np.round(np.linspace(0, 1, args.n_thresholds + 2)[1:-1], 6))
    params = EvalParams(thresholds=thresholds, max_dist_frac=args.max_dist_frac)
    split = _split(args, args.role)
    out = args.out or args.pred / "eval"
    report = evaluate_dataset(args.pred, split, tuple(dict.fromkeys(args.types)), params, out,
                              plots=not args.no_plots)
    print(format_summary(report))
    return EXIT_OK


def cmd_plot(args) -> int:
    from rindnet.evalbench.plots import plot_pr_csvs

    paths = sorted(args.pr_dir.glob("pr_*.csv"))
    if not paths:
        raise DataError(f"no pr_<type>.csv files in {args.pr_dir}")
    try:
        written = plot_pr_csvs(paths, args.out or args.pr_dir)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    for p in written:
        print(p)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "eval": cmd_eval, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, WeightLoadError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RindError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
