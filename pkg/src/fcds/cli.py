"""Command-line entry point.

Subcommands: train, eval, predict, inspect-graph, grad-check, stats.
Exit codes: 0 success, 1 usage, 2 data validation, 3 numeric failure.
The FCDS_SEED environment variable overrides the configured seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import numerics as nm
from .checkpoint import CheckpointError, load_checkpoint, write_atomic
from .corpus import CorpusError, LabelSchema, load_corpus
from .depgraph import build_graph, graph_distance_stats
from .encoder import Vocabulary
from .gradcheck import run_all
from .metrics import evaluate
from .model import RelationModel
from .training import (ConfigError, NumericFailure, TrainConfig,
                       generate_predictions, train)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="fcds",
                     description="relation extraction over fused syntax structures")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a model and write a checkpoint")
    p_train.add_argument("--corpus", required=True, help="corpus directory")
    p_train.add_argument("--config", help="key = value config file")
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument("--log", help="metric log path (default: <out>.log)")
    p_train.add_argument("--dev-split", default="dev")

    p_eval = sub.add_parser("eval", help="score a checkpoint on a split")
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--split", required=True, choices=("dev", "test"))
    p_eval.add_argument("--config")
    p_eval.add_argument("--out", help="write the structured report here as JSON")

    p_pred = sub.add_parser("predict", help="write a prediction file for a split")
    p_pred.add_argument("--corpus", required=True)
    p_pred.add_argument("--ckpt", required=True)
    p_pred.add_argument("--split", default="dev")
    p_pred.add_argument("--config")
    p_pred.add_argument("--out", required=True)

    p_graph = sub.add_parser("inspect-graph", help="dump one document's graph")
    p_graph.add_argument("--corpus", required=True)
    p_graph.add_argument("--split", default="train")
    p_graph.add_argument("--doc", required=True)
    p_graph.add_argument("--pair", help="subject,object entity ids (default: first pair)")
    p_graph.add_argument("--ckpt")
    p_graph.add_argument("--config")
    p_graph.add_argument("--out", help="write the dump here instead of stdout")

    p_check = sub.add_parser("grad-check", help="finite-difference check per component")
    p_check.add_argument("--seed", type=int, default=7)
    p_check.add_argument("--dims", choices=("tiny", "small"), default="tiny")
    p_check.add_argument("--tolerance", type=float, default=1e-4)

    p_stats = sub.add_parser("stats", help="entity distance stats with/without document node")
    p_stats.add_argument("--corpus", required=True)
    p_stats.add_argument("--split", default="train")
    return parser


def _require_paths(*paths):
    for path in paths:
        if path and not os.path.exists(path):
            raise CorpusError(f"path does not exist: {path}")


def _load_split(corpus_dir, split):
    schema_path = os.path.join(corpus_dir, "relations.json")
    split_path = os.path.join(corpus_dir, f"{split}.jsonl")
    _require_paths(corpus_dir, schema_path, split_path)
    schema = LabelSchema.load(schema_path)
    return load_corpus(split_path, schema), schema


def _load_config(path, seed_override):
    cfg = TrainConfig.from_file(path) if path else TrainConfig()
    if seed_override is not None:
        cfg = cfg.with_overrides(seed=seed_override)
    return cfg


def _env_seed():
    raw = os.environ.get("FCDS_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"FCDS_SEED must be an integer, got {raw!r}") from None


def _restore_model(corpus_dir, ckpt_path, cfg):
    """Rebuild the model for a checkpoint; vocabulary derives from train split."""
    train_docs, schema = _load_split(corpus_dir, "train")
    header, values = load_checkpoint(ckpt_path)
    if header["config_hash"] != cfg.config_hash():
        raise CheckpointError(
            f"{ckpt_path}: config hash {header['config_hash']} does not match the "
            f"given configuration ({cfg.config_hash()}); pass the training config")
    vocab = Vocabulary.build(train_docs, cfg.vocab_min_count)
    model = RelationModel(schema, vocab, cfg)
    model.load_values(values)
    return model, schema, train_docs


def _cmd_train(args):
    seed = _env_seed()
    cfg = _load_config(args.config, seed)
    if args.config:
        _require_paths(args.config)
    train_docs, schema = _load_split(args.corpus, "train")
    dev_docs, _ = _load_split(args.corpus, args.dev_split)
    log_path = args.log or args.out + ".log"
    result = train(train_docs, dev_docs, schema, cfg, args.out, log_path)
    print(f"trained {result['steps']} steps; best dev F1 {result['best_f1']:.4f} "
          f"at epoch {result['best_epoch']}")
    print(f"checkpoint: {args.out}")
    print(f"metric log: {log_path}")
    return EXIT_OK


def _cmd_eval(args):
    cfg = _load_config(args.config, _env_seed())
    _require_paths(args.ckpt)
    model, schema, train_docs = _restore_model(args.corpus, args.ckpt, cfg)
    docs, _ = _load_split(args.corpus, args.split)
    preds = generate_predictions(model, docs, schema)
    report = evaluate(preds, docs, schema, train_docs=train_docs)
    payload = json.dumps(report.as_dict(), sort_keys=True)
    print(payload)
    print(report.table())
    if args.out:
        write_atomic(args.out, (payload + "\n").encode("utf-8"))
    return EXIT_OK


def _cmd_predict(args):
    cfg = _load_config(args.config, _env_seed())
    _require_paths(args.ckpt)
    model, schema, _ = _restore_model(args.corpus, args.ckpt, cfg)
    docs, _ = _load_split(args.corpus, args.split)
    preds = generate_predictions(model, docs, schema)
    lines = []
    for record in preds.records():
        named = dict(record)
        named["relation"] = schema.name_of(named.pop("relation"))
        lines.append(json.dumps(named, sort_keys=True))
    write_atomic(args.out, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return EXIT_OK


def _format_graph_dump(doc, graph, stats_with, stats_without):
    lines = [f"doc {doc.doc_id}: {graph.node_count} nodes"]
    lines.append("nodes:")
    for index, node in enumerate(graph.skeleton.nodes):
        detail = ""
        if node.kind in ("token", "root_token"):
            detail = (f" sentence={node.sentence_index} "
                      f"token={doc.tokens()[node.token_index].surface!r}")
        elif node.kind == "mention":
            detail = f" entity={node.entity_id} mention={node.mention_ordinal}"
        lines.append(f"  {index:>4} {node.kind}{detail}")
    lines.append("edges:")
    adjacency = graph.adjacency.data
    n = graph.node_count
    for i in range(n):
        for j in range(n):
            if adjacency[i, j] != 0.0 and (adjacency[j, i] == 0.0 or i < j):
                kind = "bi" if adjacency[j, i] != 0.0 else "->"
                lines.append(f"  {i:>4} {kind} {j:<4} weight={adjacency[i, j]:+.6f}")
    lines.append("distance stats (with document node):    " + json.dumps(stats_with))
    lines.append("distance stats (without document node): " + json.dumps(stats_without))
    return "\n".join(lines) + "\n"


def _cmd_inspect_graph(args):
    cfg = _load_config(args.config, _env_seed())
    docs, schema = _load_split(args.corpus, args.split)
    matches = [d for d in docs if d.doc_id == args.doc]
    if not matches:
        raise CorpusError(f"doc {args.doc!r} not found in split {args.split!r}")
    doc = matches[0]
    if len(doc.entities) < 2:
        raise CorpusError(f"doc {args.doc!r} has fewer than two entities")

    if args.pair:
        try:
            subject_id, object_id = (int(x) for x in args.pair.split(","))
        except ValueError:
            raise UsageError(f"--pair expects 'subject,object', got {args.pair!r}") from None
    else:
        subject_id = doc.entities[0].entity_id
        object_id = doc.entities[1].entity_id

    if args.ckpt:
        _require_paths(args.ckpt)
        model, _, _ = _restore_model(args.corpus, args.ckpt, cfg)
    else:
        train_docs, _ = _load_split(args.corpus, "train")
        vocab = Vocabulary.build(train_docs, cfg.vocab_min_count)
        model = RelationModel(schema, vocab, cfg)

    with nm.no_grad():
        state = model.encode(doc)
        from .constituency import pair_attention
        attn = pair_attention(state.entity_vectors[subject_id],
                              state.entity_vectors[object_id],
                              state.bank, model.attention)
        graph = build_graph(doc, state.enc, state.bank, attn.weights, model.dep_head)
    dump = _format_graph_dump(doc, graph,
                              graph_distance_stats([doc], with_document_node=True),
                              graph_distance_stats([doc], with_document_node=False))
    if args.out:
        write_atomic(args.out, dump.encode("utf-8"))
        print(f"wrote graph dump to {args.out}")
    else:
        sys.stdout.write(dump)
    return EXIT_OK


def _cmd_grad_check(args):
    seed = _env_seed()
    if seed is not None:
        args.seed = seed
    results = run_all(args.seed, args.dims)
    failed = False
    for name, err in results.items():
        status = "ok" if err <= args.tolerance else "FAIL"
        if err > args.tolerance:
            failed = True
        print(f"{name:<20} max relative error {err:.3e}  [{status}]")
    if failed:
        print(f"gradient check FAILED at tolerance {args.tolerance:g}")
        return EXIT_NUMERIC
    print(f"all components within tolerance {args.tolerance:g}")
    return EXIT_OK


def _cmd_stats(args):
    docs, _ = _load_split(args.corpus, args.split)
    with_node = graph_distance_stats(docs, with_document_node=True)
    without_node = graph_distance_stats(docs, with_document_node=False)
    print(json.dumps({"with_document_node": with_node,
                      "without_document_node": without_node}, sort_keys=True))
    print()
    print(f"{'':<24}{'with doc node':>16}{'without doc node':>20}")
    for key in ("avg", "std", "max", "min"):
        print(f"{key:<24}{with_node[key]:>16.4f}{without_node[key]:>20.4f}")
    print(f"{'pairs':<24}{with_node['pairs']:>16}{without_node['pairs']:>20}")
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "inspect-graph": _cmd_inspect_graph,
    "grad-check": _cmd_grad_check,
    "stats": _cmd_stats,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _env_seed()  # a malformed FCDS_SEED is a usage error for any command
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, CheckpointError, ConfigError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericFailure, nm.ShapeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
