"""Conversation-scoped orchestration: turns, pipeline, events, edits, re-runs.

A session owns exactly three execution contexts: the sandbox (file storage and
code execution), the global table registry, and the per-snippet diagrams.
Turns stream language-model text (or raw code) through ingest, parsing,
extraction, diagram construction, instrumentation, and sandboxed execution,
publishing ordered event envelopes ``{seq, type, payload}`` along the way.
Node-scoped interrogations keep their own side conversations and never touch
the main conversation memory.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field

from .edits import ParamEdit, apply_llm_rewrite, apply_param_edit
from .errors import FlowlensError, IncompleteSnippetError, UnknownNodeError
from .extract import Operation, TableRegistry, extract_operations
from .graph import BindOutcome, Diagram, OperationNode, ResultKind, TableNode, TableState
from .instrument import ExecUnit, Instrumenter
from .llm import LlmClientConfig, make_client
from .parsing import parse_statement
from .runner import SandboxRunner
from .spans import Span
from .streaming import CodeChunk, SnippetBuffer, StatementUnit


@dataclass
class SessionConfig:
    interpreter: str | None = None
    unit_timeout: float = 30.0
    output_cap: int = 1 << 20
    llm: LlmClientConfig = field(default_factory=LlmClientConfig)


@dataclass
class SnippetRecord:
    snippet_id: str
    source: str = ""
    revision: int = 0
    status: str = "pending"  # pending | ok | failed | stale
    diagram: Diagram | None = None
    statements: list[StatementUnit] = field(default_factory=list)
    units: list[ExecUnit] = field(default_factory=list)
    bindings: dict[str, str] = field(default_factory=dict)
    split_map: dict[str, Span] = field(default_factory=dict)
    operations: dict[str, Operation] = field(default_factory=dict)
    summary: str | None = None
    patches: list[dict] = field(default_factory=list)


class Session:
    def __init__(self, session_id: str, root_dir: str,
                 config: SessionConfig | None = None):
        self.session_id = session_id
        self.root_dir = os.path.abspath(root_dir)
        self.config = config or SessionConfig()
        os.makedirs(self.root_dir, exist_ok=True)
        self.runner = SandboxRunner(
            os.path.join(self.root_dir, "sandbox"),
            interpreter=self.config.interpreter,
            timeout=self.config.unit_timeout,
            output_cap=self.config.output_cap,
        )
        self.client = make_client(self.config.llm)
        self.registry = TableRegistry()
        self.snippets: list[SnippetRecord] = []
        self.conversation: list[dict] = []
        self.node_conversations: dict[str, list[dict]] = {}
        self.events: list[dict] = []
        self.var_state: dict[str, TableState] = {}
        self._registry_snapshots: list[dict] = []
        self._lock = threading.RLock()

    # ----------------------------------------------------------------- events

    def _emit(self, event_type: str, payload: dict) -> dict:
        envelope = {"seq": len(self.events), "type": event_type, "payload": payload}
        self.events.append(envelope)
        return envelope

    def events_after(self, after: int = -1) -> list[dict]:
        return [e for e in self.events if e["seq"] > after]

    # ------------------------------------------------------------------ files

    def upload_file(self, name: str, source_path: str) -> str:
        return self.runner.upload_file(name, source_path)

    def write_upload(self, name: str, data: bytes) -> str:
        dest = os.path.join(self.runner.working_dir, os.path.basename(name))
        with open(dest, "wb") as handle:
            handle.write(data)
        return dest

    # ------------------------------------------------------------------ turns

    def run_turn(self, message: str | None = None, raw_code: str | None = None,
                 execute: bool = True) -> dict:
        """Run one conversation turn (or a raw code block) through the pipeline."""
        with self._lock:
            turn_index = len(self.conversation) // 2
            self._emit("turn_started", {"turn": turn_index})
            snippet_ids: list[str] = []
            status = "ok"
            if raw_code is not None:
                record = self._run_snippet([raw_code], execute)
                if record is not None:
                    snippet_ids.append(record.snippet_id)
                    if record.status == "failed":
                        status = "failed"
            else:
                if self.client is None:
                    raise FlowlensError("no language-model client configured")
                self.conversation.append({"role": "user", "content": message or ""})
                try:
                    chunks = self.client.complete(list(self.conversation))
                    assistant_text, snippet_ids, status = self._consume_stream(
                        chunks, execute
                    )
                    self.conversation.append(
                        {"role": "assistant", "content": assistant_text}
                    )
                except Exception as exc:
                    # transport failures mark the turn failed; any partial
                    # diagram built from the stream so far is retained
                    status = "failed"
                    self._emit("error", {"message": str(exc)})
            self._emit("turn_complete", {"turn": turn_index, "status": status,
                                         "snippets": snippet_ids})
            return {"turn": turn_index, "status": status, "snippets": snippet_ids}

    def _consume_stream(self, chunks, execute: bool):
        """Split streamed assistant text into prose events and fenced snippets."""
        buffer = ""
        in_fence = False
        pipeline: _SnippetPipeline | None = None
        full_text: list[str] = []
        snippet_ids: list[str] = []
        status = "ok"

        def handle_line(line: str):
            nonlocal in_fence, pipeline, status
            if line.strip().startswith("```"):
                if not in_fence:
                    in_fence = True
                    pipeline = self._start_snippet(execute)
                else:
                    in_fence = False
                    record = pipeline.finish()
                    snippet_ids.append(record.snippet_id)
                    if record.status == "failed":
                        status = "failed"
                    pipeline = None
                return
            if in_fence:
                pipeline.push(line)
            elif line.strip():
                self._emit("text", {"text": line})

        for chunk in chunks:
            full_text.append(chunk)
            buffer += chunk
            while "\n" in buffer:
                line, buffer = buffer.split("\n", 1)
                handle_line(line + "\n")
        if buffer:
            handle_line(buffer)
        if pipeline is not None:  # unterminated fence: close it
            record = pipeline.finish()
            snippet_ids.append(record.snippet_id)
            if record.status == "failed":
                status = "failed"
        return "".join(full_text), snippet_ids, status

    def _start_snippet(self, execute: bool) -> "_SnippetPipeline":
        snippet_id = f"s{len(self.snippets)}"
        record = SnippetRecord(snippet_id=snippet_id, diagram=Diagram(snippet_id))
        self.snippets.append(record)
        self._emit("snippet_started", {"snippet_id": snippet_id})
        return _SnippetPipeline(self, record, execute)

    def _run_snippet(self, chunks: list[str], execute: bool) -> SnippetRecord | None:
        pipeline = self._start_snippet(execute)
        for chunk in chunks:
            pipeline.push(chunk)
        return pipeline.finish()

    def _emit_deltas(self, record: SnippetRecord, deltas) -> None:
        for delta in deltas:
            payload = {"snippet_id": record.snippet_id,
                       "revision": record.revision,
                       "seq": delta.seq}
            payload.update(delta.payload)
            self._emit(delta.event, payload)

    # ------------------------------------------------------------- node access

    def find_node(self, node_id: str):
        for record in self.snippets:
            if record.diagram and node_id in record.diagram.nodes:
                return record, record.diagram.nodes[node_id]
        raise UnknownNodeError(f"no node {node_id!r} in any snippet")

    def get_snippet(self, snippet_id: str) -> SnippetRecord:
        for record in self.snippets:
            if record.snippet_id == snippet_id:
                return record
        raise FlowlensError(f"no snippet {snippet_id!r}")

    def export_graph(self, snippet_id: str, fmt: str = "graph-json",
                     runtime: bool = True) -> str:
        return self.get_snippet(snippet_id).diagram.export(fmt, runtime=runtime)

    def node_details(self, node_id: str, preview_rows: int | None = None) -> dict:
        record, node = self.find_node(node_id)
        details = {
            "node": record.diagram._node_dict(node),
            "snippet_id": record.snippet_id,
            "code_span": record.diagram.node_code_span(node_id).as_dict(),
        }
        var = None
        if isinstance(node, TableNode):
            var = node.variable
        elif isinstance(node, OperationNode):
            var = node.operation.output_table
        if preview_rows is not None and var:
            try:
                details["preview"] = self.runner.fetch_table_preview(var, preview_rows)
            except FlowlensError as exc:
                details["preview_error"] = str(exc)
        return details

    # ------------------------------------------------------------------- edits

    def edit_node_param(self, edit: ParamEdit) -> dict:
        with self._lock:
            record, _ = self.find_node(edit.node_id)
            patch = apply_param_edit(record.source, record.diagram, edit,
                                     record.revision)
            if patch.is_noop:
                return {"noop": True, "revision": record.revision, "stale": False}
            wire = patch.to_wire(record.source)
            record.patches.append(wire)
            record.source = patch.resulting_source
            record.revision = patch.revision
            self._rebuild_static(record)
            self._emit("snippet_stale", {"snippet_id": record.snippet_id,
                                         "revision": record.revision})
            return {"noop": False, "revision": record.revision, "stale": True,
                    "patch": wire}

    def _rebuild_static(self, record: SnippetRecord) -> None:
        """Re-extract a patched snippet; nodes return to pending until re-run."""
        index = self.snippets.index(record)
        base = self._registry_snapshots[index - 1] if index > 0 else {}
        self.registry.restore(json.loads(json.dumps(base)))
        pipeline = _SnippetPipeline(self, record, execute=False, fresh=True)
        pipeline.push(record.source)
        pipeline.finish()
        record.status = "stale"
        self._snapshot_registry(index)
        for downstream in self.snippets[index + 1:]:
            downstream.status = "stale"
        del self._registry_snapshots[index + 1:]

    # ------------------------------------------------------------------ rerun

    def rerun_snippet(self, snippet_id: str) -> dict:
        """Replay the log prefix, then re-execute the (possibly patched) snippet."""
        with self._lock:
            record = self.get_snippet(snippet_id)
            index = self.snippets.index(record)
            prefix = 0
            for entry in self.runner.statement_log:
                if entry.unit.snippet_id == snippet_id:
                    break
                prefix += 1
            self.runner.replay(upto=prefix, truncate=True)
            base = self._registry_snapshots[index - 1] if index > 0 else {}
            self.registry.restore(json.loads(json.dumps(base)))
            pipeline = _SnippetPipeline(self, record, execute=True, fresh=True)
            pipeline.push(record.source)
            pipeline.finish()
            self._snapshot_registry(index)
            del self._registry_snapshots[index + 1:]
            for downstream in self.snippets[index + 1:]:
                downstream.status = "stale"
                self._emit("snippet_stale",
                           {"snippet_id": downstream.snippet_id,
                            "revision": downstream.revision})
            return {"snippet_id": snippet_id, "status": record.status}

    def _snapshot_registry(self, index: int) -> None:
        snap = self.registry.snapshot()
        while len(self._registry_snapshots) <= index:
            self._registry_snapshots.append({})
        self._registry_snapshots[index] = json.loads(json.dumps(snap))

    # ------------------------------------------------------------ node queries

    def node_query(self, node_id: str, question: str) -> dict:
        """Ask about one node; context is the node and its snippet only."""
        record, node = self.find_node(node_id)
        if not isinstance(node, OperationNode):
            raise UnknownNodeError(f"{node_id} is not an operation node")
        if self.client is None:
            raise FlowlensError("no language-model client configured")
        op = node.operation
        context = {
            "kind": op.kind.value,
            "params": [[p.name, p.value] for p in op.params],
            "input_tables": list(op.input_tables),
            "output_table": op.output_table,
            "bound_states": node.bound_states,
            "snippet_source": record.source,
        }
        side = self.node_conversations.setdefault(node_id, [
            {"role": "system", "content": json.dumps(context)},
        ])
        side.append({"role": "user", "content": question})
        answer = "".join(self.client.complete(list(side)))
        side.append({"role": "assistant", "content": answer})
        result = {"answer": answer}
        suggestion = _fenced_code(answer)
        if suggestion:
            patch, pair = apply_llm_rewrite(record.source, record.diagram,
                                            node_id, suggestion, record.revision)
            if not patch.is_noop:
                wire = patch.to_wire(record.source)
                record.patches.append(wire)
                record.source = patch.resulting_source
                record.revision = patch.revision
                self._rebuild_static(record)
                self._emit("snippet_stale", {"snippet_id": record.snippet_id,
                                             "revision": record.revision})
                result["patch"] = wire
                result["commented_previous"] = pair.commented_previous
        return result

    # ----------------------------------------------------------------- minimap

    def minimap(self) -> list[dict]:
        entries = []
        for i, record in enumerate(self.snippets):
            if record.summary:
                summary = record.summary
            else:
                summary = None
                if self.client is not None:
                    try:
                        summary = "".join(self.client.complete([
                            {"role": "user",
                             "content": "Summarize this analysis step in one line:\n"
                                        + record.source},
                        ])).strip()
                        record.summary = summary
                    except Exception:
                        summary = None
                if not summary:
                    count = len(record.operations)
                    summary = f"Snippet {i}: {count} operations"
            entries.append({"snippet_id": record.snippet_id, "summary": summary})
        return entries

    # ------------------------------------------------------------- persistence

    def save(self) -> str:
        """Persist the session as a directory; figures stay in the sandbox."""
        with self._lock:
            snippets_dir = os.path.join(self.root_dir, "snippets")
            graphs_dir = os.path.join(self.root_dir, "graphs")
            os.makedirs(snippets_dir, exist_ok=True)
            os.makedirs(graphs_dir, exist_ok=True)
            manifest = {
                "session_id": self.session_id,
                "conversation": self.conversation,
                "node_conversations": self.node_conversations,
                "events": self.events,
                "registry": self.registry.snapshot(),
                "registry_snapshots": self._registry_snapshots,
                "statement_log": self.runner.log_as_dicts(),
                "var_state": {k: v.as_dict() for k, v in self.var_state.items()},
                "snippets": [],
            }
            for record in self.snippets:
                with open(os.path.join(snippets_dir, f"{record.snippet_id}.py"), "w") as handle:
                    handle.write(record.source)
                with open(os.path.join(graphs_dir, f"{record.snippet_id}.json"), "w") as handle:
                    handle.write(record.diagram.export("graph-json"))
                manifest["snippets"].append({
                    "snippet_id": record.snippet_id,
                    "source": record.source,
                    "revision": record.revision,
                    "status": record.status,
                    "summary": record.summary,
                    "patches": record.patches,
                    "diagram": record.diagram.to_dict(),
                    "statements": [
                        {"snippet_id": s.snippet_id, "index": s.index,
                         "source": s.source, "span": s.span.as_dict()}
                        for s in record.statements
                    ],
                    "units": [u.as_dict() for u in record.units],
                    "bindings": record.bindings,
                    "split_map": {k: v.as_dict() for k, v in record.split_map.items()},
                    "operations": {k: _op_dict(v) for k, v in record.operations.items()},
                })
            path = os.path.join(self.root_dir, "manifest.json")
            with open(path, "w") as handle:
                json.dump(manifest, handle, indent=1)
            return path

    @classmethod
    def load(cls, root_dir: str, config: SessionConfig | None = None) -> "Session":
        with open(os.path.join(root_dir, "manifest.json")) as handle:
            manifest = json.load(handle)
        session = cls(manifest["session_id"], root_dir, config)
        session.conversation = manifest["conversation"]
        session.node_conversations = manifest["node_conversations"]
        session.events = manifest["events"]
        session.registry.restore(manifest["registry"])
        session._registry_snapshots = manifest["registry_snapshots"]
        session.runner.restore_log(manifest["statement_log"])
        session.var_state = {
            k: TableState.from_dict(v) for k, v in manifest["var_state"].items()
        }
        for item in manifest["snippets"]:
            record = SnippetRecord(
                snippet_id=item["snippet_id"],
                source=item["source"],
                revision=item["revision"],
                status=item["status"],
                summary=item["summary"],
                patches=item["patches"],
                diagram=Diagram.from_dict(item["diagram"]),
                statements=[
                    StatementUnit(s["snippet_id"], s["index"], s["source"],
                                  Span.from_dict(s["span"]))
                    for s in item["statements"]
                ],
                units=[ExecUnit.from_dict(u) for u in item["units"]],
                bindings=item["bindings"],
                split_map={k: Span.from_dict(v) for k, v in item["split_map"].items()},
                operations={k: _op_from_dict(v) for k, v in item["operations"].items()},
            )
            session.snippets.append(record)
        return session

    def close(self) -> None:
        self.runner.close()


class _SnippetPipeline:
    """Streams one snippet's chunks through the full pipeline."""

    def __init__(self, session: Session, record: SnippetRecord, execute: bool,
                 fresh: bool = False):
        self.session = session
        self.record = record
        self.execute = execute
        self.buffer = SnippetBuffer(record.snippet_id)
        self.instrumenter = Instrumenter(record.snippet_id)
        self._seq = 0
        self.failed = False
        if fresh:
            record.diagram = Diagram(record.snippet_id)
            record.statements = []
            record.units = []
            record.bindings = {}
            record.split_map = {}
            record.operations = {}
        record.status = "pending"

    def push(self, text: str) -> None:
        chunk = CodeChunk(self.record.snippet_id, text, self._seq)
        self._seq += 1
        for unit in self.buffer.push_chunk(chunk):
            self._statement(unit)

    def finish(self) -> SnippetRecord:
        record = self.record
        try:
            for unit in self.buffer.finalize():
                self._statement(unit)
        except IncompleteSnippetError as exc:
            self.session._emit("error", {
                "snippet_id": record.snippet_id,
                "message": str(exc),
                "residue": exc.residue,
            })
            self.failed = True
        if not record.source:
            record.source = self.buffer.text
        record.status = "failed" if self.failed else "ok"
        session = self.session
        index = session.snippets.index(record)
        session._snapshot_registry(index)
        session._emit("snippet_finished", {"snippet_id": record.snippet_id,
                                           "status": record.status})
        return record

    def _statement(self, unit: StatementUnit) -> None:
        session = self.session
        record = self.record
        record.statements.append(unit)
        outcome = parse_statement(unit)
        tree = outcome.tree
        for diag in outcome.diagnostics:
            session._emit("diagnostic", {
                "snippet_id": record.snippet_id,
                "message": diag.message,
                "span": diag.span.as_dict(),
            })
        ops = extract_operations(unit, tree, session.registry)
        for op in ops:
            record.operations[op.id] = op
        if ops:
            deltas = record.diagram.apply_operations(ops, session.registry)
            session._emit_deltas(record, deltas)
        units = self.instrumenter.add_statement(unit, tree, ops)
        record.units.extend(units)
        record.bindings = dict(self.instrumenter.program.bindings)
        record.split_map = dict(self.instrumenter.program.split_map)
        if self.execute and not self.failed:
            self._execute(units)

    def _execute(self, units: list[ExecUnit]) -> None:
        session = self.session
        record = self.record
        i = 0
        while i < len(units):
            unit = units[i]
            if unit.kind != "user":
                i += 1
                continue
            outcome = session.runner.exec_unit(unit)
            for diag in outcome.diagnostics:
                session._emit("diagnostic", {"snippet_id": record.snippet_id,
                                             "message": diag})
            if not outcome.ok:
                self.failed = True
                if unit.op_ids:
                    node_id = f"op:{unit.op_ids[0]}"
                    message = (outcome.error or {}).get("message", "execution failed")
                    error_type = (outcome.error or {}).get("type", "")
                    if error_type:
                        message = f"{error_type}: {message}"
                    deltas = record.diagram.bind_runtime_state(
                        node_id, BindOutcome(ok=False, message=message)
                    )
                    session._emit_deltas(record, deltas)
                else:
                    session._emit("error", {
                        "snippet_id": record.snippet_id,
                        "message": (outcome.error or {}).get("message", "failed"),
                    })
                return
            # pair with the probe unit that follows, if it belongs to this unit
            probe_outcome = None
            probed_op: str | None = None
            if i + 1 < len(units) and units[i + 1].kind == "probe":
                probe_unit = units[i + 1]
                bound = record.bindings.get(probe_unit.probe_id, "")
                if bound.removeprefix("op:") in unit.op_ids:
                    probe_outcome = session.runner.exec_unit(probe_unit)
                    probed_op = bound.removeprefix("op:")
                    i += 1
            records = probe_outcome.probes if probe_outcome else []
            for probe_record in records:
                session.var_state[probe_record.var] = probe_record.table_state()
            figures = list(outcome.figures)
            if probe_outcome:
                figures.extend(probe_outcome.figures)
            for op_id in unit.op_ids:
                op = record.operations[op_id]
                state = None
                if op_id == probed_op and records:
                    state = records[0].table_state()
                inputs = {v: session.var_state[v] for v in op.input_tables
                          if v in session.var_state}
                bind = BindOutcome(
                    ok=True,
                    output_state=state,
                    input_states=inputs,
                    result_text=outcome.stdout if op.produces_result is ResultKind.TEXT else None,
                    figure_paths=tuple(figures) if op.produces_result is ResultKind.FIGURE else (),
                )
                deltas = record.diagram.bind_runtime_state(f"op:{op_id}", bind)
                session._emit_deltas(record, deltas)
            i += 1


def _fenced_code(text: str) -> str | None:
    lines = text.split("\n")
    inside = False
    code: list[str] = []
    for line in lines:
        if line.strip().startswith("```"):
            if inside:
                break
            inside = True
            continue
        if inside:
            code.append(line)
    if not inside or not code:
        return None
    return "\n".join(code)


def _op_dict(op: Operation) -> dict:
    from .graph import _op_to_dict

    return _op_to_dict(op)


def _op_from_dict(d: dict) -> Operation:
    from .graph import _op_from_dict as loader

    return loader(d)
