"""Command-line entry point: train, eval, inspect-graph, gen-synth, grad-check."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checks import MODULES, run_checks
from .datagen import default_world, generate_synthetic, load_dataset, save_dataset, split_by_participant
from .errors import AdaGTCNError, ConfigError, NumericalError
from .harness import evaluate, inspect_graph, split_config, train
from .model import AdaGTCN, load_checkpoint, save_checkpoint

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _table(rows: dict) -> str:
    width = max(len(k) for k in rows)
    lines = []
    for k, v in rows.items():
        shown = f"{v:.4f}" if isinstance(v, float) else str(v)
        lines.append(f"{k:<{width}}  {shown}")
    return "\n".join(lines)


def _emit(doc: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(doc, indent=2))
    else:
        print(_table(doc))


def cmd_train(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{args.config}: expected a flat key-value object")
    model_cfg, train_cfg = split_config(doc)
    samples = load_dataset(args.data)
    train_set, val_set, test_set = split_by_participant(samples, ratios=train_cfg.split,
                                                        seed=train_cfg.seed)
    model = AdaGTCN(dataclasses.replace(model_cfg, seed=train_cfg.seed))
    result = train(model, train_set, val_set, train_cfg)
    report = evaluate(result.model, test_set)
    save_checkpoint(result.model, args.out, extra={"best_epoch": result.best_epoch,
                                                   "test": report.as_dict()})
    out = {"best_epoch": result.best_epoch, "epochs": len(result.history),
           "seconds": round(result.seconds, 2), **{f"test_{k}": v for k, v in report.as_dict().items()}}
    _emit(out, args.json)
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.ckpt)
    report = evaluate(model, load_dataset(args.data))
    _emit(report.as_dict(), args.json)
    return EXIT_OK


def cmd_inspect_graph(args) -> int:
    model = load_checkpoint(args.ckpt)
    samples = load_dataset(args.data)
    by_id = {s.session_id: s for s in samples}
    if args.sample in by_id:
        sample = by_id[args.sample]
    elif args.sample.isdigit() and int(args.sample) < len(samples):
        sample = samples[int(args.sample)]
    else:
        raise ConfigError(f"no sample {args.sample!r} in {args.data}")
    print(json.dumps(inspect_graph(model, sample), indent=2))
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    world = default_world(args.seed, p=args.p)
    samples = generate_synthetic(world, args.sessions, args.participants,
                                 np.random.default_rng(args.seed))
    save_dataset(samples, args.out, p=world.p)
    if args.planted:
        Path(args.planted).write_text(json.dumps(world.adjacency.astype(int).tolist()))
    _emit({"sessions": len(samples), "participants": args.participants, "p": world.p,
           "path": str(args.out)}, args.json)
    return EXIT_OK


def cmd_grad_check(args) -> int:
    reports = run_checks(args.module, seed=args.seed)
    ok = all(r.passed for r in reports.values())
    if args.json:
        print(json.dumps({name: {"passed": r.passed, "max_rel_error": r.max_rel_error,
                                 "tol": r.tol} for name, r in reports.items()}, indent=2))
    else:
        for name, r in reports.items():
            print(f"{name:<14} {r}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adagtcn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train on a dataset and write a checkpoint")
    p.add_argument("--config", required=True, help="flat JSON of model and training settings")
    p.add_argument("--data", required=True, help="dataset (.agt1 binary or .json)")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect-graph", help="print the learned graph for one session")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", required=True, help="session id or 0-based index")
    p.set_defaults(func=cmd_inspect_graph)

    p = sub.add_parser("gen-synth", help="write a synthetic planted-graph dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--sessions", type=int, default=400)
    p.add_argument("--participants", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=int, default=16, help="node count")
    p.add_argument("--planted", help="also write the planted adjacency as JSON here")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("grad-check", help="finite-difference gradient checks")
    p.add_argument("--module", choices=("all",) + MODULES, default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (AdaGTCNError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
