"""Command-line entry points.

    uispec store add --store FILE --spec FILE --code FILE
    uispec store query --store FILE --spec FILE [-k N]
    uispec store stats --store FILE
    uispec generate --spec FILE --out DIR [--store FILE] [--toolchain CMD] [--mock DIR]
    uispec score --render PNG --reference PNG [--csv OUT]
    uispec serve --port P --data DIR [--mock DIR] [--store FILE]
"""
from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from . import codegen as codegen_mod
from . import metrics as metrics_mod
from . import retrieval as retrieval_mod
from .clients import MockModelClient, client_from_env
from .core import parse_spec, serialize_spec
from .errors import UispecError


def _load_spec(path: str):
    return parse_spec(Path(path).read_text(encoding="utf-8"))


def _resolve_client(mock_dir: str | None):
    if mock_dir:
        return MockModelClient(mock_dir)
    client = client_from_env()
    if client is None:
        raise UispecError(
            "no model client: pass --mock DIR or set SPEC_MOCK_DIR / SPEC_MODEL_ENDPOINT"
        )
    return client


def cmd_store(args: argparse.Namespace) -> int:
    store = retrieval_mod.ExemplarStore(args.store)
    if args.action == "add":
        spec = _load_spec(args.spec)
        code = Path(args.code).read_text(encoding="utf-8")
        record_id = store.add(spec, code)
        print(record_id)
    elif args.action == "query":
        spec = _load_spec(args.spec)
        hits = store.query(spec, k=args.k)
        for hit in hits:
            print(f"{hit.record_id}\t{hit.similarity:.6f}")
    elif args.action == "stats":
        dim = retrieval_mod.feature_dimension(store.vocabulary)
        print(f"records: {store.size}")
        print(f"vector dimension: {dim}")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    client = _resolve_client(args.mock)
    fewshot = ""
    if args.store:
        store = retrieval_mod.ExemplarStore(args.store)
        if len(store):
            hits = store.query(spec, k=args.k)
            fewshot = retrieval_mod.build_fewshot_block(spec, hits, store)
    toolchain = None
    if args.toolchain:
        toolchain = codegen_mod.ToolchainSpec(tuple(shlex.split(args.toolchain)))
    artifact = codegen_mod.generate_code(spec, fewshot, client, target=args.target)
    outcome = codegen_mod.debug_loop(artifact, spec, client, toolchain)
    out = Path(args.out)
    for rel, text in outcome.artifact.files.items():
        target = out / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    status = "ok" if outcome.compile_result.ok else "failing"
    print(f"{status}: {len(outcome.artifact.files)} file(s) after {outcome.revisions} revision(s) -> {out}")
    for diag in outcome.compile_result.diagnostics:
        print(f"  {diag.file}:{diag.line}: {diag.error_type}: {diag.message}")
    return 0 if outcome.compile_result.ok else 1


def cmd_score(args: argparse.Namespace) -> int:
    render = metrics_mod.load_image(args.render)
    reference = metrics_mod.load_image(args.reference)
    record = metrics_mod.evaluate_fidelity(render, reference)
    print(f"mse: {record.mse:.4f}")
    print(f"ssim: {record.ssim:.4f}")
    if args.csv:
        metrics_mod.write_csv([(args.render, args.reference, record)], args.csv)
        print(f"wrote {args.csv}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    client = MockModelClient(args.mock) if args.mock else client_from_env()
    store = retrieval_mod.ExemplarStore(args.store) if args.store else None
    app = create_app(args.data, model_client=client, store=store)
    uvicorn.run(app, host=args.host, port=args.port, log_level=args.log_level)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uispec", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_store = sub.add_parser("store", help="manage the exemplar store")
    p_store.add_argument("action", choices=["add", "query", "stats"])
    p_store.add_argument("--store", required=True, help="JSONL store file")
    p_store.add_argument("--spec", help="SPEC JSON file (add/query)")
    p_store.add_argument("--code", help="code file (add)")
    p_store.add_argument("-k", type=int, default=5, help="hits to return (query)")
    p_store.set_defaults(func=cmd_store)

    p_gen = sub.add_parser("generate", help="render a SPEC to code")
    p_gen.add_argument("--spec", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--store", help="exemplar store for few-shot grounding")
    p_gen.add_argument("--toolchain", help="compile command with {dir} placeholder")
    p_gen.add_argument("--target", default=codegen_mod.DEFAULT_TARGET)
    p_gen.add_argument("--mock", help="fixture directory for the mock model client")
    p_gen.add_argument("-k", type=int, default=2)
    p_gen.set_defaults(func=cmd_generate)

    p_score = sub.add_parser("score", help="fidelity metrics between two renders")
    p_score.add_argument("--render", required=True)
    p_score.add_argument("--reference", required=True)
    p_score.add_argument("--csv", help="append a CSV report")
    p_score.set_defaults(func=cmd_score)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--port", type=int, default=8400)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--data", required=True, help="persistent data directory")
    p_serve.add_argument("--mock", help="fixture directory for the mock model client")
    p_serve.add_argument("--store", help="exemplar store JSONL")
    p_serve.add_argument("--log-level", default="warning")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "store" and args.action in ("add", "query") and not args.spec:
        parser.error(f"store {args.action} requires --spec")
    if args.command == "store" and args.action == "add" and not args.code:
        parser.error("store add requires --code")
    try:
        return args.func(args)
    except UispecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
