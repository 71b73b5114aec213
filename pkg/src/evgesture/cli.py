"""Command-line entry point: ``evgesture <subcommand> [options]``.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 configuration
error, 4 missing upstream artifact. Failures print one JSON object to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import yaml

from .pipeline import stages
from .pipeline.config import ConfigError, dump_config, load_config

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CONFIG, EXIT_MISSING = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _set_override(text: str) -> dict:
    """``a.b.c=value`` into a nested dict; the value is parsed as YAML."""
    if "=" not in text:
        raise UsageError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    value = yaml.safe_load(raw)
    out: dict = {}
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--output-dir", help="artifact root (also EVGESTURE_OUTPUT_DIR)")
    common.add_argument("--jobs", type=int, help="worker processes for simulate/encode")
    common.add_argument("--multiplier", type=float, help="dataset size multiplier (1.0 is ~25k samples per class)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = _Parser(prog="evgesture", description="Event-camera microgesture pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="render scripted sequences and write EVT2 event files")
    p.add_argument("--split", action="append", choices=stages.ALL_SPLITS, help="default: all splits")
    p = sub.add_parser("encode", parents=[common], help="time surfaces and window labels for sequence splits")
    p.add_argument("--split", action="append", choices=stages.SEQUENCE_SPLITS, help="default: all sequence splits")
    sub.add_parser("train", parents=[common], help="train the float model")
    sub.add_parser("finetune", parents=[common], help="rotation fine-tuning of stages 4-5")
    p = sub.add_parser("qat", parents=[common], help="quantisation-aware training and integer export")
    p.add_argument("--source", choices=("float", "finetuned"), default="float")
    p = sub.add_parser("evaluate", parents=[common], help="validation confusion and prompted-trial F1")
    p.add_argument("--model", choices=stages.MODELS, help="default: eval.model from the config")
    p.add_argument("--rotated", action="store_true", help="use the rotated validation split and trials")
    sub.add_parser("bench", parents=[common], help="float vs integer latency")
    sub.add_parser("report", parents=[common], help="summarise all evaluation reports")
    p = sub.add_parser("config", parents=[common], help="print the resolved config as YAML")
    return parser


def resolve_config(args):
    overrides: dict = {}
    for item in args.set:
        overrides = _deep_merge(overrides, _set_override(item))
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.multiplier is not None:
        overrides.setdefault("data", {})["multiplier"] = args.multiplier
    return load_config(args.config, overrides)


def _deep_merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def run(args) -> None:
    cfg = resolve_config(args)
    cmd = args.command
    if cmd == "config":
        sys.stdout.write(dump_config(cfg))
    elif cmd == "simulate":
        stages.simulate(cfg, tuple(args.split or stages.ALL_SPLITS))
    elif cmd == "encode":
        stages.encode(cfg, tuple(args.split or stages.SEQUENCE_SPLITS))
    elif cmd == "train":
        stages.train_stage(cfg)
    elif cmd == "finetune":
        stages.finetune_stage(cfg)
    elif cmd == "qat":
        stages.qat_stage(cfg, args.source)
    elif cmd == "evaluate":
        path = stages.evaluate_stage(cfg, args.model, args.rotated)
        m = json.loads(path.read_text())
        print(json.dumps({"report": str(path), "average_precision": m["validation"]["average_precision"],
                          "mean_f1": m["trials"]["mean_f1"], "median_f1": m["trials"]["median_f1"]}))
    elif cmd == "bench":
        print(stages.bench_stage(cfg).read_text(), end="")
    elif cmd == "report":
        print(stages.report_stage(cfg))


def _fail(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(asctime)s %(message)s")
    try:
        run(args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except stages.MissingArtifactError as exc:
        return _fail("missing_artifact", exc, EXIT_MISSING)
    except Exception as exc:  # noqa: BLE001 - reported as a structured error
        return _fail(type(exc).__name__, exc, EXIT_ERROR)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
