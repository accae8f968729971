"""Per-snippet dataflow diagram: typed nodes, edges, deltas, and exports.

Nodes come in three classes (table / operation / result), edges in five kinds.
Construction appends ordered :class:`GraphDelta` events so consumers can build
and animate the diagram incrementally; activation events are appended in
execution order.  Layout is rank-only: a chain occupies one column, its
operations successive rows; chains sharing a root table get successive
columns.  Pixel geometry belongs to the UI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import StateTransitionError, UnknownFormatError, UnknownNodeError
from .extract import Operation, OperationKind, ResultKind, TableRegistry
from .spans import Span

TABLE_CLASS = "table"        # rendered yellow
OPERATION_CLASS = "operation"  # rendered pink
RESULT_CLASS = "result"      # rendered white


class NodeState(str, Enum):
    PENDING = "pending"
    ACTIVE = "active"
    FAILED = "failed"


class EdgeKind(str, Enum):
    INPUT = "input"
    ASSIGNMENT = "assignment"
    RESULT_GENERATION = "result_generation"
    OPERATION_CHAIN = "operation_chain"
    CROSS_SNIPPET_LINEAGE = "cross_snippet_lineage"


@dataclass(frozen=True)
class TableState:
    rows: int
    cols: int
    columns: tuple[str, ...]

    def __post_init__(self):
        if self.cols != len(self.columns):
            raise ValueError("cols must equal len(columns)")

    def as_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "columns": list(self.columns)}

    @classmethod
    def from_dict(cls, d: dict) -> "TableState":
        return cls(d["rows"], d["cols"], tuple(d["columns"]))


@dataclass
class TableNode:
    id: str
    variable: str
    snippet_id: str
    generation: int
    span: Span
    prior_occurrence: str | None = None
    dangling: bool = False
    table_state: TableState | None = None
    row: int = 0
    col: int = 0

    node_class = TABLE_CLASS


@dataclass
class OperationNode:
    id: str
    operation: Operation
    snippet_id: str
    state: NodeState = NodeState.PENDING
    bound_states: dict | None = None
    failure_message: str | None = None
    chain_prev: str | None = None
    glyph_source: str | None = None
    row: int = 0
    col: int = 0

    node_class = OPERATION_CLASS


@dataclass
class ResultNode:
    id: str
    kind: ResultKind
    payload_ref: str
    snippet_id: str
    span: Span
    row: int = 0
    col: int = 0

    node_class = RESULT_CLASS


@dataclass(frozen=True)
class Edge:
    id: str
    kind: EdgeKind
    src: str
    dst: str

    def as_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind.value, "from": self.src, "to": self.dst}


@dataclass(frozen=True)
class GraphDelta:
    seq: int
    event: str
    payload: dict

    def as_dict(self) -> dict:
        return {"seq": self.seq, "event": self.event, "payload": self.payload}


_LOADS_KEY = "__loads__"


class Diagram:
    """Single-writer diagram for one snippet."""

    def __init__(self, snippet_id: str):
        self.snippet_id = snippet_id
        self.nodes: dict[str, object] = {}
        self.node_order: list[str] = []
        self.edges: list[Edge] = []
        self.deltas: list[GraphDelta] = []
        self.diagnostics: list[str] = []
        self.local_tables: dict[str, str] = {}
        self._chain_cols: dict[str, int] = {}
        self._result_count: dict[str, int] = {}

    # ------------------------------------------------------------------ deltas

    def _delta(self, event: str, payload: dict) -> GraphDelta:
        delta = GraphDelta(len(self.deltas), event, payload)
        self.deltas.append(delta)
        return delta

    def _add_node(self, node) -> GraphDelta:
        self.nodes[node.id] = node
        self.node_order.append(node.id)
        return self._delta("node_added", {"node": self._node_dict(node)})

    def _add_edge(self, kind: EdgeKind, src: str, dst: str) -> GraphDelta:
        edge = Edge(f"e{len(self.edges)}", kind, src, dst)
        self.edges.append(edge)
        return self._delta("edge_added", {"edge": edge.as_dict()})

    # ------------------------------------------------------------- construction

    def _ensure_input_table(self, var: str, registry: TableRegistry,
                            span: Span) -> str:
        if var in self.local_tables:
            return self.local_tables[var]
        entry = registry.get(var)
        if entry is not None and entry.node_id and entry.node_snippet not in (
                None, self.snippet_id):
            node = TableNode(
                id=f"tbl:{self.snippet_id}:{var}:{entry.node_generation}",
                variable=var,
                snippet_id=self.snippet_id,
                generation=entry.node_generation,
                span=span,
                prior_occurrence=entry.node_id,
            )
            prior = entry.node_id
            self._add_node(node)
            self._add_edge(EdgeKind.CROSS_SNIPPET_LINEAGE, prior, node.id)
            entry.node_id = node.id
            entry.node_snippet = self.snippet_id
            self.local_tables[var] = node.id
            return node.id
        generation = entry.generation if entry else 0
        node = TableNode(
            id=f"tbl:{self.snippet_id}:{var}:{generation}",
            variable=var,
            snippet_id=self.snippet_id,
            generation=generation,
            span=span,
            dangling=entry is None,
        )
        if entry is None:
            self.diagnostics.append(f"input table {var!r} is not registered")
        else:
            entry.node_id = node.id
            entry.node_snippet = self.snippet_id
            entry.node_generation = generation
        self._add_node(node)
        self.local_tables[var] = node.id
        return node.id

    def _add_output_table(self, var: str, registry: TableRegistry, op: Operation,
                          row: int, col: int) -> str:
        entry = registry.get(var)
        generation = entry.generation if entry else 0
        node = TableNode(
            id=f"tbl:{self.snippet_id}:{var}:{generation}",
            variable=var,
            snippet_id=self.snippet_id,
            generation=generation,
            span=op.span,
            row=row,
            col=col,
        )
        self._add_node(node)
        self.local_tables[var] = node.id
        if entry is not None:
            entry.node_id = node.id
            entry.node_snippet = self.snippet_id
            entry.node_generation = generation
        return node.id

    def apply_operations(self, ops: list[Operation], registry: TableRegistry) -> list[GraphDelta]:
        """Add pending nodes/edges for extracted operations, in chain order."""
        start = len(self.deltas)
        for group in _by_statement(ops):
            self._apply_statement(group, registry)
        return self.deltas[start:]

    def _apply_statement(self, ops: list[Operation], registry: TableRegistry) -> None:
        first = ops[0]
        if first.link_inputs:
            root_id = self._ensure_input_table(first.link_inputs[0], registry, first.span)
            root_key = root_id
            base_row = self.nodes[root_id].row
        elif first.input_tables:
            root_id = self._ensure_input_table(first.input_tables[0], registry, first.span)
            root_key = root_id
            base_row = self.nodes[root_id].row
        else:
            root_key = _LOADS_KEY
            base_row = -1
        col = self._chain_cols.get(root_key, 0)
        self._chain_cols[root_key] = col + 1

        prev_op_node: OperationNode | None = None
        for k, op in enumerate(ops):
            input_ids = [
                self._ensure_input_table(var, registry, op.span)
                for var in op.link_inputs
            ]
            node = OperationNode(
                id=f"op:{op.id}",
                operation=op,
                snippet_id=self.snippet_id,
                row=base_row + 1 + k,
                col=col,
            )
            if prev_op_node is not None:
                node.chain_prev = prev_op_node.id
                node.glyph_source = prev_op_node.id
            elif input_ids:
                node.glyph_source = input_ids[0]
            self._add_node(node)
            for input_id in input_ids:
                self._add_edge(EdgeKind.INPUT, input_id, node.id)
            if prev_op_node is not None:
                self._add_edge(EdgeKind.OPERATION_CHAIN, prev_op_node.id, node.id)
            prev_op_node = node

        last_op = ops[-1]
        if last_op.output_table and prev_op_node is not None:
            out_id = self._add_output_table(
                last_op.output_table, registry, last_op,
                prev_op_node.row + 1, col,
            )
            self._add_edge(EdgeKind.ASSIGNMENT, prev_op_node.id, out_id)

    # ---------------------------------------------------------------- runtime

    def bind_runtime_state(self, op_node_id: str, outcome: "BindOutcome") -> list[GraphDelta]:
        """Activate or fail a pending operation node with its execution outcome."""
        node = self.nodes.get(op_node_id)
        if node is None or not isinstance(node, OperationNode):
            raise UnknownNodeError(f"no operation node {op_node_id!r}")
        if node.state is not NodeState.PENDING:
            raise StateTransitionError(
                f"node {op_node_id} is {node.state.value}, not pending"
            )
        start = len(self.deltas)
        if not outcome.ok:
            node.state = NodeState.FAILED
            node.failure_message = outcome.message or "execution failed"
            self._delta("node_failed", {"node": node.id, "message": node.failure_message})
            return self.deltas[start:]

        node.state = NodeState.ACTIVE
        node.bound_states = {
            "output": outcome.output_state.as_dict() if outcome.output_state else None,
            "inputs": {k: v.as_dict() for k, v in (outcome.input_states or {}).items()},
        }
        op = node.operation
        if op.output_table and outcome.output_state is not None:
            out_node_id = self.local_tables.get(op.output_table)
            out_node = self.nodes.get(out_node_id) if out_node_id else None
            if isinstance(out_node, TableNode):
                out_node.table_state = outcome.output_state
        state_dict = outcome.output_state.as_dict() if outcome.output_state else None
        self._delta("node_activated", {"node": node.id, "table_state": state_dict})

        if op.produces_result is ResultKind.FIGURE and outcome.figure_paths:
            for path in outcome.figure_paths:
                self._add_result(node, ResultKind.FIGURE, path)
        elif op.produces_result is ResultKind.TEXT:
            payload = outcome.result_text
            if not payload and outcome.output_state is not None:
                st = outcome.output_state
                payload = f"{st.rows} rows x {st.cols} columns"
            self._add_result(node, ResultKind.TEXT, payload or "")

        self._delta("glyph_flow", {
            "from": node.glyph_source,
            "to": node.id,
            "state": state_dict,
        })
        return self.deltas[start:]

    def _add_result(self, op_node: OperationNode, kind: ResultKind, payload: str) -> None:
        count = self._result_count.get(op_node.id, 0)
        self._result_count[op_node.id] = count + 1
        node = ResultNode(
            id=f"res:{op_node.operation.id}:{count}",
            kind=kind,
            payload_ref=payload,
            snippet_id=self.snippet_id,
            span=op_node.operation.span,
            row=op_node.row,
            col=op_node.col,
        )
        self._add_node(node)
        self._add_edge(EdgeKind.RESULT_GENERATION, op_node.id, node.id)

    # ----------------------------------------------------------------- queries

    def node_code_span(self, node_id: str) -> Span:
        node = self.nodes.get(node_id)
        if node is None:
            raise UnknownNodeError(f"no node {node_id!r}")
        if isinstance(node, OperationNode):
            return node.operation.span
        return node.span

    def operation_nodes(self) -> list[OperationNode]:
        return [self.nodes[i] for i in self.node_order
                if isinstance(self.nodes[i], OperationNode)]

    # ------------------------------------------------------------------ export

    def _node_dict(self, node, runtime: bool = True) -> dict:
        if isinstance(node, TableNode):
            state_dict = node.table_state.as_dict() if (runtime and node.table_state) else None
            return {
                "id": node.id,
                "class": TABLE_CLASS,
                "label": node.variable,
                "state": None,
                "params": [],
                "spans": [node.span.as_dict()],
                "table_state": state_dict,
                "rank": [node.row, node.col],
                "generation": node.generation,
                "prior_occurrence": node.prior_occurrence,
            }
        if isinstance(node, OperationNode):
            op = node.operation
            bound = node.bound_states or {}
            out_state = bound.get("output") if runtime else None
            return {
                "id": node.id,
                "class": OPERATION_CLASS,
                "label": op.kind.value,
                "state": node.state.value if runtime else NodeState.PENDING.value,
                "params": [
                    {"name": p.name, "value": p.value, "span": p.span.as_dict()}
                    for p in op.params
                ],
                "spans": [op.span.as_dict()],
                "table_state": out_state,
                "rank": [node.row, node.col],
                "output_table": op.output_table,
                "produces_result": op.produces_result.value,
                "failure": node.failure_message if runtime else None,
            }
        return {
            "id": node.id,
            "class": RESULT_CLASS,
            "label": node.kind.value,
            "state": None,
            "params": [],
            "spans": [node.span.as_dict()],
            "table_state": None,
            "rank": [node.row, node.col],
            "payload_ref": node.payload_ref,
        }

    def export(self, fmt: str = "graph-json", runtime: bool = True) -> str:
        """Deterministic serialization; graph-json round-trips losslessly."""
        if fmt == "graph-json":
            return json.dumps(self._export_dict(runtime), separators=(",", ":"))
        if fmt == "dot":
            return self._export_dot(runtime)
        raise UnknownFormatError(f"unknown export format {fmt!r}")

    def _export_dict(self, runtime: bool = True) -> dict:
        nodes = []
        keep: set[str] = set()
        for node_id in self.node_order:
            node = self.nodes[node_id]
            if not runtime and isinstance(node, ResultNode):
                continue
            keep.add(node_id)
            nodes.append(self._node_dict(node, runtime))
        kept_edges = [e for e in self.edges
                      if e.kind is not EdgeKind.CROSS_SNIPPET_LINEAGE
                      and e.src in keep and e.dst in keep]
        kept_edges += [e for e in self.edges
                       if e.kind is EdgeKind.CROSS_SNIPPET_LINEAGE and e.dst in keep]
        if runtime:
            edges = [e.as_dict() for e in kept_edges]
            seq = len(self.deltas)
        else:
            # The static view is a pure function of structure: edge ids are
            # densified and seq counts construction events only, so an
            # executed diagram projects to the same bytes as a never-run one.
            edges = [dict(e.as_dict(), id=f"e{i}") for i, e in enumerate(kept_edges)]
            seq = len(nodes) + len(edges)
        return {
            "nodes": nodes,
            "edges": edges,
            "meta": {"snippet_id": self.snippet_id, "seq": seq},
        }

    def _export_dot(self, runtime: bool = True) -> str:
        lines = [f'digraph "{self.snippet_id}" {{']
        for node_id in self.node_order:
            node = self.nodes[node_id]
            if not runtime and isinstance(node, ResultNode):
                continue
            d = self._node_dict(node, runtime)
            label = d["label"].replace('"', '\\"')
            lines.append(f'  "{node_id}" [label="{label}" class="{d["class"]}"];')
        for edge in self.edges:
            lines.append(f'  "{edge.src}" -> "{edge.dst}" [kind="{edge.kind.value}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    # ------------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        return {
            "snippet_id": self.snippet_id,
            "nodes": [_node_to_dict(self.nodes[i]) for i in self.node_order],
            "edges": [e.as_dict() for e in self.edges],
            "deltas": [d.as_dict() for d in self.deltas],
            "diagnostics": list(self.diagnostics),
            "local_tables": dict(self.local_tables),
            "chain_cols": dict(self._chain_cols),
            "result_count": dict(self._result_count),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Diagram":
        diagram = cls(data["snippet_id"])
        for nd in data["nodes"]:
            node = _node_from_dict(nd)
            diagram.nodes[node.id] = node
            diagram.node_order.append(node.id)
        diagram.edges = [
            Edge(e["id"], EdgeKind(e["kind"]), e["from"], e["to"])
            for e in data["edges"]
        ]
        diagram.deltas = [
            GraphDelta(d["seq"], d["event"], d["payload"]) for d in data["deltas"]
        ]
        diagram.diagnostics = list(data["diagnostics"])
        diagram.local_tables = dict(data["local_tables"])
        diagram._chain_cols = dict(data["chain_cols"])
        diagram._result_count = dict(data["result_count"])
        return diagram


@dataclass(frozen=True)
class BindOutcome:
    """Execution outcome bound to one operation node."""

    ok: bool
    output_state: TableState | None = None
    input_states: dict | None = None
    result_text: str | None = None
    figure_paths: tuple[str, ...] = ()
    message: str | None = None


def _by_statement(ops: list[Operation]):
    group: list[Operation] = []
    for op in ops:
        if group and op.statement_index != group[-1].statement_index:
            yield group
            group = []
        group.append(op)
    if group:
        yield group


def _op_to_dict(op: Operation) -> dict:
    return {
        "id": op.id,
        "kind": op.kind.value,
        "params": [{"name": p.name, "value": p.value, "span": p.span.as_dict()}
                   for p in op.params],
        "input_tables": list(op.input_tables),
        "output_table": op.output_table,
        "produces_result": op.produces_result.value,
        "span": op.span.as_dict(),
        "statement_index": op.statement_index,
        "link_inputs": list(op.link_inputs),
    }


def _op_from_dict(d: dict) -> Operation:
    from .extract import Param

    return Operation(
        id=d["id"],
        kind=OperationKind(d["kind"]),
        params=tuple(
            Param(p["name"], p["value"], Span.from_dict(p["span"]))
            for p in d["params"]
        ),
        input_tables=tuple(d["input_tables"]),
        output_table=d["output_table"],
        produces_result=ResultKind(d["produces_result"]),
        span=Span.from_dict(d["span"]),
        statement_index=d["statement_index"],
        link_inputs=tuple(d["link_inputs"]),
    )


def _node_to_dict(node) -> dict:
    if isinstance(node, TableNode):
        return {
            "class": TABLE_CLASS,
            "id": node.id,
            "variable": node.variable,
            "snippet_id": node.snippet_id,
            "generation": node.generation,
            "span": node.span.as_dict(),
            "prior_occurrence": node.prior_occurrence,
            "dangling": node.dangling,
            "table_state": node.table_state.as_dict() if node.table_state else None,
            "row": node.row,
            "col": node.col,
        }
    if isinstance(node, OperationNode):
        return {
            "class": OPERATION_CLASS,
            "id": node.id,
            "operation": _op_to_dict(node.operation),
            "snippet_id": node.snippet_id,
            "state": node.state.value,
            "bound_states": node.bound_states,
            "failure_message": node.failure_message,
            "chain_prev": node.chain_prev,
            "glyph_source": node.glyph_source,
            "row": node.row,
            "col": node.col,
        }
    return {
        "class": RESULT_CLASS,
        "id": node.id,
        "kind": node.kind.value,
        "payload_ref": node.payload_ref,
        "snippet_id": node.snippet_id,
        "span": node.span.as_dict(),
        "row": node.row,
        "col": node.col,
    }


def _node_from_dict(d: dict):
    if d["class"] == TABLE_CLASS:
        return TableNode(
            id=d["id"], variable=d["variable"], snippet_id=d["snippet_id"],
            generation=d["generation"], span=Span.from_dict(d["span"]),
            prior_occurrence=d["prior_occurrence"], dangling=d["dangling"],
            table_state=TableState.from_dict(d["table_state"]) if d["table_state"] else None,
            row=d["row"], col=d["col"],
        )
    if d["class"] == OPERATION_CLASS:
        return OperationNode(
            id=d["id"], operation=_op_from_dict(d["operation"]),
            snippet_id=d["snippet_id"], state=NodeState(d["state"]),
            bound_states=d["bound_states"], failure_message=d["failure_message"],
            chain_prev=d["chain_prev"], glyph_source=d["glyph_source"],
            row=d["row"], col=d["col"],
        )
    return ResultNode(
        id=d["id"], kind=ResultKind(d["kind"]), payload_ref=d["payload_ref"],
        snippet_id=d["snippet_id"], span=Span.from_dict(d["span"]),
        row=d["row"], col=d["col"],
    )
