"""Command-line entry point: train, predict, evaluate, and analyze.

Exit codes: 0 on success, 1 on usage errors (bad flags, malformed or
unknown configuration keys), 2 on data and validation errors (missing
files, malformed input, values a component rejects).  Diagnostics go to
stderr; only requested output (reports, predictions) goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

from .checkpoint import CheckpointError, load_model
from .conllu import ParseError, read_conllu, serialize_conllu, write_conllu
from .ctxe import ContextVectors, read_ctxe
from .embeddings import load_pretrained
from .metrics import EvaluationError, evaluate, format_score, relative_error_reduction
from .model import ModelConfig
from .training import TrainConfig, TrainError, predict, train

__all__ = ["run", "main", "UsageError"]


class UsageError(Exception):
    """The invocation itself is wrong; exit code 1."""


_DATA_ERRORS = (OSError, ParseError, CheckpointError, EvaluationError,
                TrainError, ValueError)

# configuration keys the CLI may set, with per-key value parsers
_MODEL_DERIVED = {
    "word_vocab", "char_vocab", "upos_labels", "xpos_labels", "feats_labels",
    "deprel_labels", "lemma_scripts", "tag_upos", "tag_xpos", "tag_feats",
    "tag_lemma", "ctx_sources",
}


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _key_registry() -> dict[str, tuple[str, object]]:
    """Map key name -> (destination, converter); seed feeds both configs."""
    registry: dict[str, tuple[str, object]] = {}
    for field in fields(TrainConfig):
        registry[field.name] = ("train", type(field.default))
    for field in fields(ModelConfig):
        if field.name in _MODEL_DERIVED or field.name in registry:
            continue
        registry[field.name] = ("model", type(field.default))
    registry["seed"] = ("both", int)
    return registry


_REGISTRY = _key_registry()


def _convert(key: str, raw: str):
    if key not in _REGISTRY:
        raise UsageError(f"unknown configuration key {key!r}")
    kind = _REGISTRY[key][1]
    try:
        if kind is bool:
            return _parse_bool(raw)
        if kind is int:
            return int(raw, 10)
        if kind is float:
            return float(raw)
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None
    return raw


def _read_config_file(path: str) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    pairs: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{number}: expected key=value, got {line!r}")
        pairs[key.strip()] = value.strip()
    return pairs


def _split_overrides(raw: dict[str, str]) -> tuple[dict, dict]:
    """Partition key=value strings into model and trainer override dicts."""
    model: dict = {}
    trainer: dict = {}
    for key, value in raw.items():
        where = _REGISTRY.get(key, (None,))[0]
        converted = _convert(key, value)
        if where in ("model", "both"):
            model[key] = converted
        if where in ("train", "both"):
            trainer[key] = converted
    return model, trainer


def _parse_ctx_flags(items: list[str] | None) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in items or []:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--ctx expects name=path, got {item!r}")
        if name in out:
            raise UsageError(f"duplicate context source {name!r}")
        out[name] = path
    return out


def _require_files(*paths: str | None) -> None:
    for path in paths:
        if path and not os.path.exists(path):
            raise FileNotFoundError(f"no such file: {path}")


def _load_ctx(mapping: dict[str, str]) -> dict[str, ContextVectors]:
    return {name: read_ctxe(path, source=name) for name, path in mapping.items()}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="udjoint", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True,
                                     parser_class=_Parser)

    p_train = commands.add_parser("train", help="fit a model on a treebank")
    p_train.add_argument("--train", required=True, metavar="FILE",
                         help="training treebank (CoNLL-U)")
    p_train.add_argument("--dev", metavar="FILE",
                         help="development treebank for model selection")
    p_train.add_argument("--model", required=True, metavar="FILE",
                         help="where to save the trained model")
    p_train.add_argument("--config", metavar="FILE",
                         help="key=value configuration file")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="configuration override (repeatable, wins over "
                              "--config and --seed)")
    p_train.add_argument("--seed", type=int, default=42,
                         help="seed for every random choice (default 42)")
    p_train.add_argument("--pretrained", metavar="FILE",
                         help="pretrained word vectors in text format")
    p_train.add_argument("--ctx", action="append", metavar="NAME=FILE",
                         help="contextual vectors for the training file "
                              "(repeatable per source)")
    p_train.add_argument("--ctx-dev", action="append", metavar="NAME=FILE",
                         help="contextual vectors for the dev file")
    p_train.set_defaults(func=_cmd_train)

    p_pred = commands.add_parser("predict", help="annotate a treebank")
    p_pred.add_argument("--model", required=True, metavar="FILE")
    p_pred.add_argument("--input", required=True, metavar="FILE")
    p_pred.add_argument("--output", required=True, metavar="FILE",
                        help="output path, or - for stdout")
    p_pred.add_argument("--pretrained", metavar="FILE")
    p_pred.add_argument("--ctx", action="append", metavar="NAME=FILE")
    p_pred.set_defaults(func=_cmd_predict)

    p_eval = commands.add_parser("evaluate", help="score predictions against gold")
    p_eval.add_argument("--gold", required=True, metavar="FILE")
    p_eval.add_argument("--system", required=True, metavar="FILE")
    p_eval.add_argument("--json", action="store_true",
                        help="emit the report as JSON instead of text")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_ana = commands.add_parser(
        "analyze", help="relative error reduction between two scores")
    p_ana.add_argument("--baseline", required=True, type=float,
                       help="baseline score in percent")
    p_ana.add_argument("--improved", required=True, type=float,
                       help="improved score in percent")
    p_ana.set_defaults(func=_cmd_analyze)
    return parser


def _cmd_train(args) -> int:
    ctx_paths = _parse_ctx_flags(args.ctx)
    ctx_dev_paths = _parse_ctx_flags(args.ctx_dev)
    _require_files(args.train, args.dev, args.config, args.pretrained,
                   *ctx_paths.values(), *ctx_dev_paths.values())

    raw = _read_config_file(args.config) if args.config else {}
    raw.setdefault("seed", str(args.seed))
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        raw[key.strip()] = value.strip()
    if "checkpoint_path" in raw:
        raise UsageError("checkpoint_path is set by --model")
    model_overrides, train_kwargs = _split_overrides(raw)

    train_tb = read_conllu(args.train)
    dev_tb = read_conllu(args.dev) if args.dev else None
    for tb in (train_tb,) + ((dev_tb,) if dev_tb else ()):
        for warning in tb.warnings:
            print(f"warning: {warning}", file=sys.stderr)

    pretrained = load_pretrained(args.pretrained) if args.pretrained else None
    ctx_train = _load_ctx(ctx_paths)
    ctx_dev = _load_ctx(ctx_dev_paths)

    config = TrainConfig(**train_kwargs, checkpoint_path=args.model)
    train(train_tb, dev_tb=dev_tb, model_overrides=model_overrides,
          config=config, pretrained=pretrained,
          ctx_train=ctx_train or None, ctx_dev=ctx_dev or None,
          log=sys.stderr)
    print(f"model saved to {args.model}", file=sys.stderr)
    return 0


def _cmd_predict(args) -> int:
    ctx_paths = _parse_ctx_flags(args.ctx)
    _require_files(args.model, args.input, args.pretrained, *ctx_paths.values())
    model = load_model(args.model)
    tb = read_conllu(args.input)
    pretrained = load_pretrained(args.pretrained) if args.pretrained else None
    out = predict(tb, model, pretrained=pretrained,
                  ctx=_load_ctx(ctx_paths) or None)
    if args.output == "-":
        sys.stdout.buffer.write(serialize_conllu(out))
        sys.stdout.buffer.flush()
    else:
        write_conllu(out, args.output)
    return 0


def _cmd_evaluate(args) -> int:
    _require_files(args.gold, args.system)
    gold = read_conllu(args.gold)
    system = read_conllu(args.system)
    report = evaluate(gold, system)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.table())
        print()
        print(report.key_values())
    return 0


def _cmd_analyze(args) -> int:
    print(format_score(relative_error_reduction(args.baseline, args.improved)))
    return 0


def run(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as error:
        print(f"usage error: {error}", file=sys.stderr)
        return 1
    except SystemExit as exit_:  # --help prints and exits 0
        return int(exit_.code or 0)
    try:
        return args.func(args)
    except UsageError as error:
        print(f"usage error: {error}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as error:
        print(f"error: {error}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
