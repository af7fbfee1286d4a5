"""Command-line surface: build-index, query, train, gen-dataset, eval.

Exit codes: 0 success, 2 input error, 3 artifact/state mismatch,
4 provider failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .benchkit import (
    evaluate,
    generate_dataset,
    read_jsonl,
    run_end_to_end,
    write_jsonl,
)
from .config import RunConfig, apply_overrides, load_config
from .dominance import CountOracle, GatEmbedder, ModelParams, TrainConfig, train
from .embeddings import (
    CachingLabelProvider,
    PersistentLabelCache,
    ProviderConfig,
    cache_path_for,
    graph_label_embeddings,
    make_label_provider,
)
from .engine import EngineCaps, RetrievalEngine, build_with_report
from .errors import InputError, KgmatchError, ProviderError, StateMismatchError
from .graph import parse_graph_document
from .rstar import RStarIndex

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STATE = 3
EXIT_PROVIDER = 4


def _load_graph(path: str):
    p = Path(path)
    if not path:
        raise InputError("no graph file configured (use --graph or graph= in config)")
    if not p.exists():
        raise InputError(f"graph file not found: {p}")
    g, report = parse_graph_document(p.read_text(encoding="utf-8"))
    if report.skipped_records:
        print(
            f"warning: skipped {report.skipped_records} malformed record(s)",
            file=sys.stderr,
        )
    return g


def _provider_for(cfg: RunConfig):
    kind = cfg.provider if cfg.provider == "remote" else "mock"
    pc = ProviderConfig(
        kind=kind, dim=cfg.f_dim, seed=cfg.seed, endpoint=cfg.endpoint or ""
    )
    provider = make_label_provider(pc)
    if cfg.provider == "remote" and cfg.index:
        provider = CachingLabelProvider(
            provider, PersistentLabelCache(cache_path_for(cfg.index, pc))
        )
    return provider


def _embedder_for(cfg: RunConfig, provider):
    # count-oracle ignores any model; mock/remote use the trained model when given
    if cfg.provider != "count-oracle" and cfg.model:
        params = ModelParams.load(cfg.model)
        return GatEmbedder(params, provider)
    return CountOracle(cfg.d_dim)


def _engine_for(cfg: RunConfig, g) -> RetrievalEngine:
    provider = _provider_for(cfg)
    caps = EngineCaps(
        completion_cap=cfg.completion_cap,
        assembly_cap=cfg.assembly_cap,
        fallback_cap=cfg.fallback_cap,
        substructure_cap=cfg.substructure_cap,
        token_budget=cfg.token_budget,
    )
    return RetrievalEngine(g, provider, _embedder_for(cfg, provider), caps=caps)


def cmd_build_index(cfg: RunConfig) -> int:
    g = _load_graph(cfg.graph)
    if not cfg.index:
        raise InputError("build-index needs --index for the output file")
    engine = _engine_for(cfg, g)
    l = cfg.l or 1
    idx, report = build_with_report(engine, l)
    idx.save(cfg.index)
    print(json.dumps({"index": cfg.index, **report.to_json()}, sort_keys=True))
    return EXIT_OK


def cmd_query(cfg: RunConfig, question: str | None) -> int:
    g = _load_graph(cfg.graph)
    text = question
    if text is None or text == "-":
        text = sys.stdin.read()
    if not text.strip():
        raise InputError("no question given (argument or stdin)")
    engine = _engine_for(cfg, g)
    l = None
    if cfg.index:
        p = Path(cfg.index)
        if not p.exists():
            raise InputError(f"index file not found: {p}")
        idx = RStarIndex.load(p)
        engine.adopt_index(idx)
        l = idx.path_length
    if cfg.l:
        l = cfg.l
    outcome = engine.answer(text, l=l)
    print(json.dumps(outcome.to_json(), sort_keys=True))
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    g = _load_graph(cfg.graph)
    if not cfg.model:
        raise InputError("train needs --model for the output file")
    provider = _provider_for(cfg)
    inputs = graph_label_embeddings(g, provider)
    result = train(
        g,
        inputs,
        TrainConfig(seed=cfg.seed, out_dim=cfg.d_dim, substructure_cap=cfg.substructure_cap),
    )
    result.params.save(cfg.model)
    print(
        json.dumps(
            {
                "model": cfg.model,
                "epochs": result.epochs_run,
                "final_loss": result.final_loss,
                "max_violation": result.max_violation,
                "converged": result.converged,
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def cmd_gen_dataset(cfg: RunConfig, n: int) -> int:
    g = _load_graph(cfg.graph)
    if not cfg.out:
        raise InputError("gen-dataset needs --out for the JSONL file")
    records = generate_dataset(g, n, seed=cfg.seed)
    write_jsonl(records, cfg.out)
    print(json.dumps({"out": cfg.out, "records": len(records)}, sort_keys=True))
    return EXIT_OK


def cmd_eval(cfg: RunConfig, dataset: str | None, n: int) -> int:
    g = _load_graph(cfg.graph)
    engine = _engine_for(cfg, g)
    l = cfg.l or 2
    if dataset:
        records = read_jsonl(dataset)
        from .benchkit import answer_records

        answers, _, errors = answer_records(engine, records, l=l)
        report = evaluate(records, answers)
        report.runtime = {"records": len(records), "errors": sum(1 for e in errors if e)}
    else:
        report, _ = run_end_to_end(g, n, seed=cfg.seed, l=l, engine=engine)
    payload = json.dumps(report.to_json(), sort_keys=True)
    if cfg.out:
        Path(cfg.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--graph", help="graph document path")
    parser.add_argument("--index", help="index artifact path")
    parser.add_argument("--model", help="trained model path")
    parser.add_argument("--provider", choices=["mock", "count-oracle", "remote"])
    parser.add_argument("--endpoint", help="remote provider URL")
    parser.add_argument("--l", type=int, dest="l", help="path length (0 = query diameter)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--token-budget", type=int, dest="token_budget")
    parser.add_argument("--out", help="output file path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgmatch",
        description="Structure-guided exact retrieval over knowledge graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build-index", help="embed paths and build the R*-tree")
    _add_common(p_build)

    p_query = sub.add_parser("query", help="answer one question (JSON on stdout)")
    _add_common(p_query)
    p_query.add_argument("question", nargs="?", help="question text, '-' or omitted for stdin")
    p_query.add_argument(
        "--structured",
        action="store_true",
        help="input is record-grammar text (the bypass parser accepts it either way)",
    )

    p_train = sub.add_parser("train", help="train the dominance-embedding model")
    _add_common(p_train)

    p_gen = sub.add_parser("gen-dataset", help="generate bridge-star QA records")
    _add_common(p_gen)
    p_gen.add_argument("--n", type=int, default=10)

    p_eval = sub.add_parser("eval", help="run the pipeline over a dataset and score it")
    _add_common(p_eval)
    p_eval.add_argument("--dataset", help="JSONL records; omitted = generate fresh")
    p_eval.add_argument("--n", type=int, default=20)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = {
            key: getattr(args, key, None)
            for key in (
                "graph",
                "index",
                "model",
                "provider",
                "endpoint",
                "l",
                "seed",
                "jobs",
                "token_budget",
                "out",
            )
        }
        apply_overrides(cfg, overrides)
        cfg.validate()
        if args.command == "build-index":
            return cmd_build_index(cfg)
        if args.command == "query":
            return cmd_query(cfg, args.question)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "gen-dataset":
            return cmd_gen_dataset(cfg, args.n)
        if args.command == "eval":
            return cmd_eval(cfg, args.dataset, args.n)
        raise InputError(f"unknown command {args.command!r}")
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StateMismatchError as exc:
        print(f"state mismatch: {exc}", file=sys.stderr)
        return EXIT_STATE
    except ProviderError as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except KgmatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
