"""Command-line entry point: gen, tokenize, train, eval, compare.

Every command is reproducible: (flags, config file, seed) fully determine
the outputs. Exit codes: 0 success, 1 runtime/I-O error, 2 invalid input,
3 degenerate statistics.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter

import numpy as np

from . import graphs as gc
from . import tokens as tk
from .config import ConfigError, load_config, reference_doc
from .harness import (DegenerateInput, TrainConfig, compare_modes,
                      kendall_tau_b, predict, tau_table, train_predictor)
from .model import EncoderConfig, ModelError, load_model, save_model

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2
EXIT_DEGENERATE = 3

HISTORY_HEADER = "epoch,loss,tau_clean,tau_noisy,tau_inf,tau_conv"


def _default_seed() -> int:
    return int(os.environ.get("TART_SEED", "0"))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tart",
        description="Tokenize architecture graphs and train/evaluate performance predictors.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset (JSONL)",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--count", type=int, default=400, help="number of graphs")
    p.add_argument("--max-nodes", type=int, default=16, help="upper bound on nodes per graph")
    p.add_argument("--density", type=float, default=0.3,
                   help="edge inclusion probability in (0, 1]")
    p.add_argument("--noise", type=float, default=0.02, help="label noise sigma")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: TART_SEED env or 0)")
    p.add_argument("--out", required=True, help="output JSONL path")

    p = sub.add_parser("tokenize", help="dump binary token matrices for a dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--in", dest="input", required=True, help="input JSONL dataset")
    p.add_argument("--out", required=True, help="output binary token file")
    p.add_argument("--mode", choices=("lap", "node-only"), default="lap",
                   help="tokenization mode")
    p.add_argument("--d-p", type=int, default=3, help="positional feature width")
    p.add_argument("--jobs", type=int, default=1, help="parallel tokenization threads")

    p = sub.add_parser("train", help="train a predictor and write checkpoint + history CSV",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                       epilog=reference_doc())
    p.add_argument("--config", default=None, help="config file (key = value lines)")
    p.add_argument("--data", required=True, help="labeled JSONL dataset")
    p.add_argument("--seed", type=int, default=None,
                   help="training seed (default: TART_SEED env or 0)")
    p.add_argument("--train-frac", type=float, default=0.5,
                   help="fraction of records used for training; rest is held out")
    p.add_argument("--out-model", required=True, help="checkpoint output path")
    p.add_argument("--history", required=True, help="per-epoch history CSV output path")
    p.add_argument("--jobs", type=int, default=1, help="parallel tokenization threads")

    p = sub.add_parser("eval", help="evaluate a checkpoint: per-target Kendall-Tau as JSON",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="labeled JSONL dataset")
    p.add_argument("--mode", choices=("tart", "pure"), default="tart",
                   help="tokenization mode the model was trained with")
    p.add_argument("--d-p", type=int, default=3, help="positional feature width")

    p = sub.add_parser("compare",
                       help="run node-only baseline vs LAP tokenization at equal epochs",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                       epilog=reference_doc())
    p.add_argument("--config", default=None, help="config file (key = value lines)")
    p.add_argument("--data", required=True, help="labeled JSONL dataset")
    p.add_argument("--epochs", type=int, default=None,
                   help="override train.epochs for both modes")
    p.add_argument("--trials", type=int, default=None, help="override harness.trials")
    p.add_argument("--seed", type=int, default=None,
                   help="base seed (default: TART_SEED env or 0)")
    p.add_argument("--train-frac", type=float, default=0.5,
                   help="fraction of records used for training")
    p.add_argument("--out-csv", default=None, help="write long-format comparison CSV here")
    p.add_argument("--jobs", type=int, default=1, help="parallel tokenization threads")
    return parser


def _seed_of(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _load_split(path: str, train_frac: float, seed: int) -> gc.DatasetSplit:
    records = gc.read_dataset(path)
    n_train = int(round(train_frac * len(records)))
    return gc.split_dataset(records, n_train, seed)


def _train_config(cfg: dict, seed: int, jobs: int, mode=None, epochs=None) -> TrainConfig:
    model = EncoderConfig(
        n_layer=cfg["model.n_layer"], d_model=cfg["model.d_model"],
        n_heads=cfg["model.n_heads"], d_ff=cfg["model.d_ff"],
        dropout_p=cfg["model.dropout"],
        input_width=tk.token_width(1, cfg["tokenizer.d_p"]),
        pooling=cfg["model.pooling"],
    )
    return TrainConfig(
        epochs=epochs if epochs is not None else cfg["train.epochs"],
        batch_size=cfg["train.batch_size"], seed=seed, model=model,
        mode=mode if mode is not None else cfg["train.mode"],
        lr=cfg["train.lr"], d_p=cfg["tokenizer.d_p"], jobs=jobs,
    )


def _history_csv(history) -> str:
    lines = [HISTORY_HEADER]
    for entry in history:
        tau = entry.get("tau")
        if tau is None:
            taus = ["", "", "", ""]
        else:
            taus = [f"{tau[name]:.10f}" for name in gc.TARGET_NAMES]
        lines.append(f"{entry['epoch']},{entry['loss']:.10f}," + ",".join(taus))
    return "\n".join(lines) + "\n"


def cmd_gen(args) -> int:
    try:
        records = gc.generate_synthetic(args.count, args.max_nodes, args.density,
                                        args.noise, _seed_of(args))
    except gc.InvalidSpec as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    gc.write_dataset(records, args.out)
    node_hist = Counter(r.graph.num_nodes for r in records)
    edge_hist = Counter(r.graph.num_edges for r in records)
    print(f"wrote {len(records)} graphs to {args.out}")
    print("nodes: " + " ".join(f"{k}:{node_hist[k]}" for k in sorted(node_hist)))
    print("edges: " + " ".join(f"{k}:{edge_hist[k]}" for k in sorted(edge_hist)))
    return EXIT_OK


def cmd_tokenize(args) -> int:
    try:
        records = gc.read_dataset(args.input)
    except gc.ValidationError as exc:
        print(f"error: invalid graph {exc.record_id}: {exc.cause}", file=sys.stderr)
        return EXIT_INVALID
    except gc.ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    mats = tk.tokenize_many([r.graph for r in records], args.mode,
                            d_p=args.d_p, jobs=args.jobs)
    token_elements = 0
    onehot_elements = 0
    for rec, tm in zip(records, mats):
        print(f"{rec.id}: {tm.num_rows} x {tm.width}")
        token_elements += tm.data.size
        onehot_elements += tk.one_hot_element_count(rec.graph)
    tk.write_token_file(args.out, [(r.id, tm) for r, tm in zip(records, mats)])
    ratio = token_elements / onehot_elements if onehot_elements else float("nan")
    print(f"corpus token elements: {token_elements}, one-hot elements: {onehot_elements}, "
          f"reduction ratio: {ratio:.4f}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = _seed_of(args)
    split = _load_split(args.data, args.train_frac, seed)
    tcfg = _train_config(cfg, seed, args.jobs)
    model, history = train_predictor(split, tcfg)
    save_model(model, args.out_model)
    with open(args.history, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_history_csv(history))
    last = history[-1]
    print(f"trained {tcfg.mode} model: {tcfg.epochs} epochs, final loss {last['loss']:.6f}")
    if "tau" in last:
        print("test tau: " + json.dumps(last["tau"]))
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    records = gc.read_dataset(args.data)
    if any(r.targets is None for r in records):
        print("error: dataset contains unlabeled records", file=sys.stderr)
        return EXIT_INVALID
    preds = predict(model, [r.graph for r in records], args.mode, d_p=args.d_p)
    truths = np.stack([r.targets.as_array() for r in records])
    print(json.dumps(tau_table(preds, truths), indent=2))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    seed = _seed_of(args)
    trials = args.trials if args.trials is not None else cfg["harness.trials"]
    split = _load_split(args.data, args.train_frac, seed)
    cfg_pure = _train_config(cfg, seed, args.jobs, mode="pure", epochs=args.epochs)
    cfg_tart = _train_config(cfg, seed, args.jobs, mode="tart", epochs=args.epochs)
    comparison = compare_modes(split, cfg_pure, cfg_tart, n_trials=trials, base_seed=seed)
    print(comparison.to_text())
    csv_text = comparison.to_csv()
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv_text)
    else:
        print(csv_text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": cmd_gen, "tokenize": cmd_tokenize, "train": cmd_train,
                "eval": cmd_eval, "compare": cmd_compare}
    try:
        return handlers[args.command](args)
    except DegenerateInput as exc:
        print(f"error: degenerate statistics: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (gc.InvalidSpec, gc.ParseError, gc.ValidationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, gc.GraphError, ModelError, tk.TokenizerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
