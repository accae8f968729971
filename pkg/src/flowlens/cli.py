"""Batch entry points: analyze, run, serve, replay.

``analyze`` maps a script to its graph without executing anything; ``run``
executes the instrumented script in a sandbox and writes a report; ``serve``
starts the HTTP API; ``replay`` drives a recorded conversation fixture through
the full pipeline and prints the event envelopes.

Machine-readable output goes to stdout, diagnostics to stderr.  Exit status is
0 only when the command fully succeeds (run: all units Ok; analyze: parse and
export done; replay: fixture completed).

Environment: FLOWLENS_INTERPRETER, FLOWLENS_LLM_MODE, FLOWLENS_LLM_ENDPOINT,
FLOWLENS_FIXTURE.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile

from .errors import FlowlensError
from .extract import TableRegistry, extract_operations
from .graph import Diagram
from .llm import LlmClientConfig, ReplayLlmClient
from .parsing import parse_statement
from .session import Session, SessionConfig
from .streaming import split_statements


def analyze_source(source: str, snippet_id: str = "s0") -> Diagram:
    """Static pipeline: ingest, parse, extract, build the diagram."""
    registry = TableRegistry()
    diagram = Diagram(snippet_id)
    for unit in split_statements(source, snippet_id):
        tree = parse_statement(unit).tree
        ops = extract_operations(unit, tree, registry)
        if ops:
            diagram.apply_operations(ops, registry)
    return diagram


def _cmd_analyze(args) -> int:
    try:
        with open(args.script) as handle:
            source = handle.read()
    except OSError as exc:
        print(f"cannot read {args.script}: {exc}", file=sys.stderr)
        return 2
    try:
        diagram = analyze_source(source)
        sys.stdout.write(diagram.export(args.format, runtime=False))
        if args.format == "graph-json":
            sys.stdout.write("\n")
    except FlowlensError as exc:
        print(f"analyze failed: {exc}", file=sys.stderr)
        return 1
    return 0


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as handle:
        return json.load(handle)


def _cmd_run(args) -> int:
    try:
        with open(args.script) as handle:
            source = handle.read()
    except OSError as exc:
        print(f"cannot read {args.script}: {exc}", file=sys.stderr)
        return 2
    file_config = _load_config_file(args.config)
    interpreter = args.interpreter or file_config.get("interpreter")
    timeout = args.timeout if args.timeout is not None else file_config.get("timeout", 30.0)
    work_dir = args.work_dir or tempfile.mkdtemp(prefix="flowlens-run-")
    config = SessionConfig(interpreter=interpreter, unit_timeout=timeout)
    session = Session("cli-run", work_dir, config)
    try:
        if args.data_dir:
            for name in sorted(os.listdir(args.data_dir)):
                path = os.path.join(args.data_dir, name)
                if os.path.isfile(path):
                    session.upload_file(name, path)
        result = session.run_turn(raw_code=source)
        report = _build_report(session, result)
        payload = json.dumps(report, indent=1)
        if args.report:
            with open(args.report, "w") as handle:
                handle.write(payload + "\n")
        else:
            print(payload)
        return 0 if result["status"] == "ok" else 1
    finally:
        session.close()
        if not args.work_dir and not args.keep_work_dir:
            shutil.rmtree(work_dir, ignore_errors=True)


def _build_report(session: Session, result: dict) -> dict:
    snippets = []
    for record in session.snippets:
        export = json.loads(record.diagram.export("graph-json"))
        nodes = [
            {
                "id": n["id"],
                "kind": n["label"],
                "state": n["state"],
                "table_state": n["table_state"],
                "failure": n.get("failure"),
            }
            for n in export["nodes"] if n["class"] == "operation"
        ]
        figures = [
            n["payload_ref"] for n in export["nodes"]
            if n["class"] == "result" and n["label"] == "figure"
        ]
        snippets.append({
            "snippet_id": record.snippet_id,
            "status": record.status,
            "nodes": nodes,
            "figures": figures,
        })
    return {"status": result["status"], "snippets": snippets,
            "events": len(session.events)}


def _cmd_serve(args) -> int:
    import uvicorn

    from .api import SessionManager, create_app

    file_config = _load_config_file(args.config)
    host = args.host or file_config.get("host", "127.0.0.1")
    port = args.port if args.port is not None else file_config.get("port", 8040)
    root = args.sessions_root or file_config.get("sessions_root", "./flowlens-sessions")
    config = SessionConfig(llm=LlmClientConfig.from_env(),
                           interpreter=os.environ.get("FLOWLENS_INTERPRETER"))
    manager = SessionManager(root, config)
    app = create_app(manager)
    uvicorn.run(app, host=host, port=port)
    return 0


def _cmd_replay(args) -> int:
    try:
        with open(args.fixture) as handle:
            fixture = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read fixture: {exc}", file=sys.stderr)
        return 2
    turns = fixture.get("turns")
    if not isinstance(turns, list) or not all(
        isinstance(t, dict) and "user" in t and "assistant" in t for t in turns
    ):
        print("fixture schema mismatch: expected turns[{user, assistant}]",
              file=sys.stderr)
        return 2
    base = os.path.dirname(os.path.abspath(args.fixture))
    work_dir = tempfile.mkdtemp(prefix="flowlens-replay-")
    session = Session("cli-replay", work_dir, SessionConfig())
    session.client = ReplayLlmClient(
        {"responses": [t["assistant"] for t in turns]}
    )
    try:
        for item in fixture.get("files", []):
            path = item if os.path.isabs(item) else os.path.join(base, item)
            if not os.path.isfile(path):
                print(f"fixture data file missing: {item}", file=sys.stderr)
                return 2
            session.upload_file(os.path.basename(item), path)
        for turn in turns:
            session.run_turn(message=turn["user"])
        for envelope in session.events:
            print(json.dumps(envelope, separators=(",", ":")))
        return 0
    finally:
        session.close()
        shutil.rmtree(work_dir, ignore_errors=True)


def build_parser() -> argparse.ArgumentParser:
    formatter = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="flowlens",
        description="Dataflow graphs for dataframe-analysis code.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", formatter_class=formatter,
                             help="export a script's graph (no execution)")
    analyze.add_argument("script")
    analyze.add_argument("--format", choices=["graph-json", "dot"],
                         default="graph-json", help="export format")
    analyze.set_defaults(func=_cmd_analyze)

    run = sub.add_parser("run", formatter_class=formatter,
                         help="execute a script instrumented in a sandbox")
    run.add_argument("script")
    run.add_argument("--data-dir", help="directory of data files copied into the sandbox")
    run.add_argument("--report", help="write the execution report to this path")
    run.add_argument("--work-dir", help="session directory (default: temporary)")
    run.add_argument("--keep-work-dir", action="store_true",
                     help="keep the temporary session directory")
    run.add_argument("--interpreter", default=os.environ.get("FLOWLENS_INTERPRETER"),
                     help="sandbox interpreter (default: this python)")
    run.add_argument("--timeout", type=float, default=None,
                     help="per-unit wall-clock timeout in seconds (default 30)")
    run.add_argument("--config", help="JSON config file; flags override its values")
    run.set_defaults(func=_cmd_run)

    serve = sub.add_parser("serve", formatter_class=formatter,
                           help="start the HTTP API")
    serve.add_argument("--host", default=None, help="bind address (default 127.0.0.1)")
    serve.add_argument("--port", type=int, default=None, help="listen port (default 8040)")
    serve.add_argument("--sessions-root", default=None,
                       help="directory for session state (default ./flowlens-sessions)")
    serve.add_argument("--config", help="JSON config file; flags override its values")
    serve.set_defaults(func=_cmd_serve)

    replay = sub.add_parser("replay", formatter_class=formatter,
                            help="replay a recorded conversation fixture")
    replay.add_argument("fixture")
    replay.set_defaults(func=_cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
