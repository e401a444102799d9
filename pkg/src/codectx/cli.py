"""Operator command-line interface.

Subcommands: index | query | train | eval | check. Exit codes are stable
across commands: 0 success, 1 I/O or fatal error, 2 invalid input or
flags, 3 guardrail verdict failure. Machine-readable output goes to
stdout (JSON); logs and errors go to stderr. File-writing commands write
atomically (temp file, then rename).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import Config, ConfigError, load_config
from .corpus import CorpusIndex, IngestError, ingest_repo
from .evalharness import (
    DatasetError,
    EvalPipelineConfig,
    evaluate,
    queries_from_jsonl,
    render_report_table,
)
from .guardrails import (
    RECOMMENDATION_KINDS,
    ExternalCheckError,
    Recommendation,
    run_guardrails,
)
from .prompt import DEFAULT_TEMPLATE, PromptBudgetError, assemble, parse_template_file
from .ranking import (
    DEFAULT_MODEL,
    RankerModel,
    ScoredItem,
    SelectionPolicy,
    TrainConfig,
    accuracy,
    examples_from_jsonl,
    featurize,
    score,
    select,
    train,
    train_test_split,
)
from .retrieval import Query, retrieve

log = logging.getLogger("codectx")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_INVALID = 2
EXIT_GUARDRAIL = 3


def _load_cli_config(args) -> Config:
    config = Config()
    if getattr(args, "config", None):
        config = load_config(args.config, config)
    return config


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def cmd_index(args) -> int:
    try:
        config = _load_cli_config(args)
        overrides = {}
        if args.window is not None:
            overrides["chunk_window_lines"] = args.window
        if args.stride is not None:
            overrides["chunk_stride_lines"] = args.stride
        if args.include:
            overrides["include_globs"] = tuple(args.include)
        if args.exclude:
            overrides["exclude_globs"] = config.exclude_globs + tuple(args.exclude)
        if overrides:
            from dataclasses import replace

            config = replace(config, **overrides).validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    try:
        index = ingest_repo(args.root, config.ingest_config())
        index.save(args.out)
    except (IngestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL

    summary = {
        "files": index.stats.file_count,
        "items": index.stats.item_count,
        "symbols": len(index.symbol_names()),
        "skipped_files": index.stats.skipped_files,
        "read_warnings": index.stats.read_warnings,
        "out": args.out,
    }
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        print(
            "indexed {files} files into {items} items "
            "({symbols} symbols, {skipped_files} skipped) -> {out}".format(**summary)
        )
    return EXIT_OK


def _load_index(path: str) -> CorpusIndex:
    if not os.path.exists(path):
        raise IngestError(f"index file not found: {path!r}")
    return CorpusIndex.load(path)


def _load_model(args, config: Config) -> RankerModel:
    path = getattr(args, "model", None) or config.ranker_model_path
    if path:
        return RankerModel.load(path)
    return DEFAULT_MODEL


def _selection_policy(args, config: Config) -> SelectionPolicy:
    policy_kind = args.policy or config.selection_policy
    if policy_kind == "score_threshold":
        tau = config.score_threshold if args.tau is None else args.tau
        return SelectionPolicy.score_threshold(tau)
    if policy_kind == "token_budget":
        budget = config.budget_chat if args.budget is None else args.budget
        return SelectionPolicy.token_budget(budget)
    raise ValueError(f"unknown policy {policy_kind!r}")


def cmd_query(args) -> int:
    try:
        config = _load_cli_config(args)
        policy = _selection_policy(args, config)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        index = _load_index(args.index)
        model = _load_model(args, config)
        template = DEFAULT_TEMPLATE
        if args.template:
            with open(args.template, "r", encoding="utf-8") as fh:
                template = parse_template_file(fh.read())
    except (IngestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL

    top_n = config.top_n_per_retriever if args.top_n is None else args.top_n
    query = Query(
        text=args.text, top_n_per_retriever=top_n, active_file=args.active_file
    )
    pool = retrieve(index, query)

    features = {}
    scored = []
    for cand in pool.fused:
        item = index.item(cand.item_id)
        fv = featurize(query, item, pool)
        relevance = score(model, fv)
        scored.append(ScoredItem(item_id=item.id, score=relevance, tokens=item.token_count))
        if args.show_features:
            features[str(item.id)] = {
                name: getattr(fv, name) for name in model.feature_names
            }
    selection = select(scored, policy)

    result = {
        "query": query.text,
        "retrievers": {
            tag: [
                {"item_id": c.item_id, "score": c.raw_score, "rank": c.rank}
                for c in cands
            ]
            for tag, cands in pool.per_retriever.items()
        },
        "fused": [
            {"item_id": c.item_id, "score": c.raw_score, "rank": c.rank}
            for c in pool.fused
        ],
        "selection": {
            "policy": selection.policy_used,
            "total_tokens": selection.total_tokens,
            "items": [
                {
                    "item_id": item_id,
                    "score": rel,
                    "path": index.item(item_id).path,
                    "start_line": index.item(item_id).start_line,
                    "end_line": index.item(item_id).end_line,
                    "tokens": index.item(item_id).token_count,
                }
                for item_id, rel in selection.items
            ],
        },
    }
    if args.show_features:
        result["features"] = features

    if args.emit_prompt or args.prompt_file:
        budget = config.budget_chat if args.budget is None else args.budget
        try:
            prompt_text = assemble(
                [index.item(item_id) for item_id, _ in selection.items],
                query.text,
                template,
                budget,
            )
        except PromptBudgetError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        if args.emit_prompt:
            result["prompt"] = prompt_text
        if args.prompt_file:
            _atomic_write_text(args.prompt_file, prompt_text)

    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        with open(args.examples, "r", encoding="utf-8") as fh:
            examples = examples_from_jsonl(fh.read())
        hyper = TrainConfig(
            learning_rate=args.learning_rate, epochs=args.epochs, l2=args.l2, seed=args.seed
        )
        train_part, heldout = train_test_split(
            examples, holdout_fraction=args.holdout, seed=args.seed
        )
        if not heldout:
            train_part, heldout = examples, examples
        model = train(train_part, hyper)
        model.save(args.out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL

    heldout_accuracy = accuracy(model, heldout)
    summary = {
        "examples": len(examples),
        "train_examples": len(train_part),
        "heldout_examples": len(heldout),
        "heldout_accuracy": heldout_accuracy,
        "epochs": args.epochs,
        "out": args.out,
    }
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        print(
            "trained on {train_examples} examples; held-out accuracy "
            "{heldout_accuracy:.4f} -> {out}".format(**summary)
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        config = _load_cli_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        index = _load_index(args.index)
        model = _load_model(args, config)
    except (IngestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    try:
        with open(args.dataset, "r", encoding="utf-8") as fh:
            queries = queries_from_jsonl(fh.read())
        pipeline = EvalPipelineConfig(
            top_n_per_retriever=config.top_n_per_retriever,
            model=model,
            policy=SelectionPolicy.score_threshold(config.score_threshold),
        )
        report = evaluate(index, queries, pipeline)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for detail in exc.errors:
            print(f"  {detail}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL

    rendered = json.dumps(report, sort_keys=True)
    if args.report:
        _atomic_write_text(args.report, rendered + "\n")
    if args.json:
        print(rendered)
    else:
        print(render_report_table(report))
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        config = _load_cli_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        index = _load_index(args.index)
    except (IngestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    try:
        with open(args.recommendation, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        kind = payload["kind"]
        if kind not in RECOMMENDATION_KINDS:
            raise ValueError(f"unknown recommendation kind {kind!r}")
        rec = Recommendation(
            kind=kind,
            text=str(payload["text"]),
            language_tag=str(payload.get("language_tag", "plain_text")),
            target_symbol=payload.get("target_symbol"),
            rec_id=str(payload.get("id", "rec-0")),
        )
        if rec.kind == "unit_test" and not rec.target_symbol:
            raise ValueError("unit_test recommendation requires target_symbol")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: invalid recommendation file: {exc}", file=sys.stderr)
        return EXIT_INVALID

    commands = tuple(config.external_checks) + tuple(args.external or ())
    try:
        report = run_guardrails(
            rec, index, external_commands=commands, timeout=config.check_timeout
        )
    except ExternalCheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL

    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK if report.verdict else EXIT_GUARDRAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codectx",
        description="Repository context engine: index, query, train, eval, check.",
    )
    parser.add_argument("--version", action="version", version=f"codectx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and serialize a corpus index")
    p.add_argument("root", help="repository root directory")
    p.add_argument("--out", required=True, help="output index file")
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--window", type=int, help="chunk window in lines")
    p.add_argument("--stride", type=int, help="chunk stride in lines")
    p.add_argument("--include", action="append", help="include glob (repeatable)")
    p.add_argument("--exclude", action="append", help="extra exclude glob (repeatable)")
    p.add_argument("--json", action="store_true", help="JSON summary on stdout")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="retrieve, rank, and select context items")
    p.add_argument("index", help="index file from 'codectx index'")
    p.add_argument("text", help="query text")
    p.add_argument("--config", help="config file")
    p.add_argument("--model", help="ranker model file (JSON)")
    p.add_argument("--top-n", type=int, dest="top_n", help="candidates per retriever")
    p.add_argument(
        "--policy", choices=["token_budget", "score_threshold"], help="selection policy"
    )
    p.add_argument("--budget", type=int, help="token budget for selection/prompt")
    p.add_argument("--tau", type=float, help="relevance threshold in [0, 1]")
    p.add_argument("--active-file", dest="active_file", help="workspace active file hint")
    p.add_argument("--show-features", action="store_true", dest="show_features")
    p.add_argument("--emit-prompt", action="store_true", dest="emit_prompt")
    p.add_argument("--prompt-file", dest="prompt_file", help="also write the prompt here")
    p.add_argument("--template", help="prompt template file")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("train", help="train the pointwise ranker")
    p.add_argument("examples", help="labeled examples (JSONL)")
    p.add_argument("--out", required=True, help="output model file (JSON)")
    p.add_argument("--learning-rate", type=float, default=1.0, dest="learning_rate")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", type=float, default=0.2, help="held-out fraction")
    p.add_argument("--json", action="store_true", help="JSON summary on stdout")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate retrieval quality on a labeled dataset")
    p.add_argument("index", help="index file")
    p.add_argument("dataset", help="labeled queries (JSONL)")
    p.add_argument("--config", help="config file")
    p.add_argument("--model", help="ranker model file")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--json", action="store_true", help="JSON report on stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="run guardrails on a recommendation")
    p.add_argument("index", help="index file")
    p.add_argument("recommendation", help="recommendation file (JSON)")
    p.add_argument("--config", help="config file")
    p.add_argument(
        "--external",
        action="append",
        help="external check command with {file} placeholder (repeatable)",
    )
    p.set_defaults(func=cmd_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
