"""Command-line entry point: ``krst <command> [flags]``.

Every command prints line-delimited JSON records on stdout. Exit codes:
0 success, 2 config error, 3 data or format error, 4 numeric failure.
"""
import argparse
import json
import logging
import sys

from . import harness
from .config import ABLATIONS, build_config
from .errors import DataError, KrstError, NumericError

log = logging.getLogger("krst")


def _emit(record):
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")
    sys.stdout.flush()


def _parse_set(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _config(args):
    overrides = _parse_set(args.set)
    for name in ("seed", "out", "task", "data", "epochs"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return build_config(args.config, overrides, args.preset)


def cmd_gen(args):
    cfg = _config(args)
    out = cfg.data or cfg.out
    manifest = harness.generate(cfg, out, args.offset_seed)
    _emit({"command": "gen", "out": out, **(manifest if isinstance(manifest, dict) else {})})


def cmd_train(args):
    cfg = _config(args)
    if not cfg.data:
        cfg = cfg.replace(data=cfg.out)
    result = harness.train(cfg)
    _emit({"command": "train", "checkpoint": result["checkpoint"], "metrics": result["metrics"]})


def cmd_eval(args):
    metrics = harness.evaluate(args.checkpoint, args.data, args.split, args.out)
    _emit({"command": "eval", "metrics": metrics})


def cmd_ablate(args):
    cfg = _config(args)
    names = [n for n in (args.ablations or "").split(",") if n] if args.ablations is not None else list(ABLATIONS)
    for row in harness.run_ablation(cfg, names):
        _emit({"command": "ablate", **row})


def cmd_gradcheck(args):
    cfg = _config(args)
    failed = False
    for row in harness.gradcheck_report(cfg, tol=args.tol, n_coords=args.coords):
        _emit({"command": "gradcheck", **row})
        failed = failed or not row["passed"]
    if failed:
        raise NumericError(f"gradient check above tolerance {args.tol}")


def cmd_dump_attn(args):
    record = harness.dump_attn(args.checkpoint, args.data, args.sample, args.split, args.frame, args.object)
    _emit({"command": "dump-attn", **record})


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--preset", choices=("desk", "paper"))
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config field")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="krst", description="Keyword-aware relative spatio-temporal graph VideoQA")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--task")
    p.add_argument("--data", help="dataset directory (defaults to --out)")
    p.add_argument("--offset-seed", type=int, help="seed for the global scene translation")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="train and evaluate on the test split")
    p.add_argument("--task")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="train the full model and ablated variants")
    p.add_argument("--task")
    p.add_argument("--data")
    p.add_argument("--epochs", type=int)
    p.add_argument("--ablations", help=f"comma list from {','.join(ABLATIONS)}; default all")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every head")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=200)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dump-attn", parents=[common], help="attention and neighbor trace for one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--object", type=int, default=0)
    p.set_defaults(func=cmd_dump_attn)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(f"krst: {exc}", file=sys.stderr)
        return 2
    except KrstError as exc:
        print(f"krst: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"krst: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
