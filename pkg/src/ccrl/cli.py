"""Command line entry point: ``ccrl {extract,train,reproduce,check}``."""

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import config as C
from .agents import SCHEMES
from .harness import PipelineError, run_pipeline
from .presets import PRESETS, SCALES


def _load(args):
    cfg = C.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seeds=[args.seed])
    if args.scheme is not None:
        cfg = replace(cfg, scheme=args.scheme)
    return cfg


def cmd_extract(args):
    cfg = _load(args)
    art = run_pipeline(cfg, args.out, do_train=False)
    print(json.dumps(art.metrics, indent=2, sort_keys=True))


def cmd_train(args):
    cfg = _load(args)
    art = run_pipeline(cfg, args.out, do_train=True)
    print(json.dumps(art.metrics, indent=2, sort_keys=True))


def cmd_reproduce(args):
    from .presets import preset_dicts
    from .reproduce import reproduce
    if args.print_config:
        for name, d in preset_dicts(args.figure, args.scale).items():
            print(f"# variant: {name}")
            print(C.dumps(C.from_dict(d)))
        return
    summary = reproduce(args.figure, args.scale, args.out, args.seed, args.scheme)
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_check(args):
    from .checks import run_checks
    results = run_checks()
    for r in results:
        print(r.line())
    if not all(r.passed for r in results):
        raise PipelineError("check", RuntimeError("invariant suite failed"))


def build_parser():
    p = argparse.ArgumentParser(prog="ccrl", description="Causal coordinated concurrent RL experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config):
        sp.add_argument("--config", required=need_config, help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="run only this seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--scheme", choices=SCHEMES, help="override the sharing scheme")

    sp = sub.add_parser("extract", help="environments to batch allocation, no training")
    common(sp, True)
    sp.set_defaults(func=cmd_extract)
    sp = sub.add_parser("train", help="full pipeline including concurrent training")
    common(sp, True)
    sp.set_defaults(func=cmd_train)
    sp = sub.add_parser("reproduce", help="run a figure preset")
    sp.add_argument("figure", choices=sorted(PRESETS))
    common(sp, False)
    sp.add_argument("--scale", choices=SCALES, default="desk")
    sp.add_argument("--print-config", action="store_true", help="print the preset configs and exit")
    sp.set_defaults(func=cmd_reproduce)
    sp = sub.add_parser("check", help="run the invariant suite")
    sp.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except C.ConfigError as exc:
        print(f"error: [config] {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: [io] {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
