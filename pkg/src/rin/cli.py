"""Operator surface: train / eval / predict / gradcheck / sweep-k.

Config files are flat text, one `key = value` per line with # comments; keys
match the TrainConfig fields (see README). Precedence is command-line
--set overrides > config file > built-in defaults. Exit codes: 0 success,
1 configuration error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import evaluation
from .corpus import RelationSchema, Sentence, load_corpus
from .errors import ConfigError, DataError, NumericError, RinError
from .numerics import Rng, grad_check, zero_grads
from .training import (
    Checkpoint,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    sweep_k,
    train,
)

_BOOL_STRINGS = {"true": True, "false": False, "1": True, "0": False,
                 "yes": True, "no": False}


def _coerce(key: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    if key not in fields:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    if key in ("d_pair", "clip_norm", "embeddings_path", "schema_path"):
        if raw.lower() in ("none", ""):
            return None
    if key in ("use_pos", "interact_er", "interact_rc", "tie_layers"):
        if raw.lower() not in _BOOL_STRINGS:
            raise ConfigError(f"config key {key} expects a boolean, got {raw!r}")
        return _BOOL_STRINGS[raw.lower()]
    if key in ("anchor_policy", "eval_mode", "embeddings_path", "schema_path"):
        return raw
    if key in ("dropout", "lr", "threshold", "positive_weight", "clip_norm"):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"config key {key} expects a number, got {raw!r}")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"config key {key} expects an integer, got {raw!r}")


def parse_config_file(path) -> dict:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                if "=" not in body:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, raw = body.split("=", 1)
                values[key.strip()] = _coerce(key.strip(), raw)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def build_config(config_path=None, overrides=None) -> TrainConfig:
    values = parse_config_file(config_path) if config_path else {}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), raw)
    return TrainConfig(**values)


def _load_schema(config: TrainConfig) -> RelationSchema:
    if not config.schema_path:
        raise ConfigError("schema_path must be set (config file or --set)")
    return RelationSchema.from_file(config.schema_path)


def cmd_train(args) -> int:
    config = build_config(args.config, args.set)
    schema = _load_schema(config)
    train_corpus = load_corpus(args.train, schema)
    dev_corpus = load_corpus(args.dev, schema)
    import os

    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "log.jsonl")
    result = train(train_corpus, dev_corpus, schema, config, log_path=log_path)
    save_checkpoint(result.best, args.out)
    print(f"best dev F1 {result.best.dev_f1:.4f} at epoch {result.best.epoch}; "
          f"checkpoint written to {args.out}")
    return 0


def _checkpoint_and_data(args) -> tuple[Checkpoint, list[Sentence]]:
    ckpt = load_checkpoint(args.ckpt)
    data = load_corpus(args.data, ckpt.schema)
    return ckpt, data


def cmd_eval(args) -> int:
    ckpt, data = _checkpoint_and_data(args)
    params = ckpt.to_params()
    config = ckpt.config
    preds = evaluation.predict_corpus(params, config, ckpt.vocab, ckpt.schema,
                                      data)
    prf = evaluation.score_predictions(preds, data, args.mode)
    if args.json:
        print(json.dumps({
            "mode": args.mode,
            "precision": prf.precision,
            "recall": prf.recall,
            "f1": prf.f1,
            "tp": prf.tp, "fp": prf.fp, "fn": prf.fn,
        }))
    else:
        print(f"P={prf.precision:.4f} R={prf.recall:.4f} F1={prf.f1:.4f}")
    return 0


def cmd_predict(args) -> int:
    ckpt, data = _checkpoint_and_data(args)
    params = ckpt.to_params()
    preds = evaluation.predict_corpus(params, ckpt.config, ckpt.vocab,
                                      ckpt.schema, data)
    with open(args.out, "w", encoding="utf-8") as fh:
        for pred in preds:
            fh.write(evaluation.prediction_to_json(pred, ckpt.schema) + "\n")
    return 0


_GRADCHECK_SCALES = {
    # (n_tokens, d_word, d_pos, d_hidden, l, k_layers)
    "tiny": (4, 6, 2, 8, 3, 2),
    "small": (6, 10, 4, 12, 4, 3),
}


def cmd_gradcheck(args) -> int:
    base = build_config(args.config, args.set)
    n, d_w, d_p, d_h, n_rel, k = _GRADCHECK_SCALES[args.scale]
    config = dataclasses.replace(
        base, d_word=d_w, d_pos=d_p, d_hidden=d_h, d_pair=d_h, k_layers=k,
        dropout=0.0, use_pos=True,
    )
    from .corpus import Vocabulary
    from .heads import er_loss, rc_loss
    from .numerics import add
    from .training import probe_params

    vocab = Vocabulary(
        token_to_id={"<pad>": 0, "<unk>": 1, "a": 2, "b": 3, "c": 4, "d": 5},
        pos_to_id={"<pad>": 0, "N": 1, "V": 2},
    )
    params = probe_params(config, vocab, n_relations=n_rel, seed=config.seed)
    token_ids = [2, 3, 4, 5, 2, 3][:n]
    pos_ids = [1, 2, 1, 2, 1, 2][:n]
    gold_tags = [0, 3, 2, 4, 2, 2][:n]  # B E O S ...
    gold_pairs = {(1, 3, 0), (3, 1, 2 % n_rel)}
    mask = [True] * n

    def objective():
        y_e, y_r = evaluation.model_outputs(params, config, token_ids, pos_ids,
                                            mode="eval")
        return add(er_loss(y_e, gold_tags, mask),
                   rc_loss(y_r, gold_pairs, mask))

    worst_err = -1.0
    worst_name = ""
    for name, tensor in params.named_parameters():
        err = grad_check(objective, [tensor], eps=1e-5)
        if err > worst_err:
            worst_err = err
            worst_name = name
        zero_grads([tensor])
    print(f"max relative gradient error {worst_err:.3e} (worst: {worst_name})")
    if worst_err < 1e-4:
        return 0
    print(f"gradient check FAILED on {worst_name}", file=sys.stderr)
    return 3


def cmd_sweep_k(args) -> int:
    config = build_config(args.config, args.set)
    schema = _load_schema(config)
    train_corpus = load_corpus(args.train, schema)
    dev_corpus = load_corpus(args.dev, schema)
    try:
        k_values = [int(v) for v in args.k.split(",") if v != ""]
        seeds = [int(v) for v in args.seeds.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"--k and --seeds expect comma-separated integers: {exc}")
    rows = sweep_k(train_corpus, dev_corpus, schema, config, k_values, seeds)
    print("K,mean_f1,std_f1,n_seeds")
    for row in rows:
        print(f"{row['k']},{row['mean_f1']:.4f},{row['std_f1']:.4f},"
              f"{len(row['f1s'])}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rin",
        description="Joint entity and relation extraction with recurrent "
                    "task interaction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and keep the best-on-dev checkpoint")
    p_train.add_argument("--config", help="flat key=value config file")
    p_train.add_argument("--train", required=True, help="training corpus (JSONL)")
    p_train.add_argument("--dev", required=True, help="development corpus (JSONL)")
    p_train.add_argument("--out", required=True, help="output checkpoint directory")
    p_train.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                         help="override a config key (repeatable)")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint on a corpus")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--mode", required=True, choices=("partial", "exact"))
    p_eval.add_argument("--json", action="store_true",
                        help="machine-readable output")
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", help="write predictions as JSONL")
    p_pred.add_argument("--ckpt", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--out", required=True)
    p_pred.set_defaults(func=cmd_predict)

    p_grad = sub.add_parser("gradcheck",
                            help="verify analytic gradients against finite differences")
    p_grad.add_argument("--config", help="flat key=value config file")
    p_grad.add_argument("--scale", default="tiny", choices=tuple(_GRADCHECK_SCALES))
    p_grad.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_grad.set_defaults(func=cmd_gradcheck)

    p_sweep = sub.add_parser("sweep-k", help="train across layer counts and seeds")
    p_sweep.add_argument("--config", help="flat key=value config file")
    p_sweep.add_argument("--train", required=True)
    p_sweep.add_argument("--dev", required=True)
    p_sweep.add_argument("--k", required=True, help="comma-separated layer counts")
    p_sweep.add_argument("--seeds", required=True, help="comma-separated seeds")
    p_sweep.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_sweep.set_defaults(func=cmd_sweep_k)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage problems are config errors.
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, RinError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
