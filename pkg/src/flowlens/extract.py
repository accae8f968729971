"""Extract atomic data operations from parsed statements.

Heuristics follow the dataframe/plotting API surface described in
``data/classification.json`` (shipped as a versioned asset so coverage can be
audited).  Chains decompose into one operation per link; uncertainty always
degrades to an ``opaque`` operation rather than an error.  A conversation-
global :class:`TableRegistry` resolves which names hold tables.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources

from .parsing import ChainLink, NodeKind, SyntaxNode, chain_links, value_expr
from .spans import Span
from .streaming import StatementUnit


class OperationKind(str, Enum):
    LOAD_DATA = "load_data"
    INSPECT = "inspect"
    SELECT = "select"
    FILTER = "filter"
    SORT = "sort"
    TRANSFORM = "transform"
    GROUP = "group"
    AGGREGATE = "aggregate"
    MERGE = "merge"
    ADD_COLUMN = "add_column"
    VISUALIZE = "visualize"
    OPAQUE = "opaque"


class ResultKind(str, Enum):
    NONE = "none"
    TEXT = "text"
    FIGURE = "figure"


@dataclass(frozen=True)
class Param:
    name: str
    value: str
    span: Span

    def as_pair(self) -> list:
        return [self.name, self.value]


@dataclass(frozen=True)
class Operation:
    id: str
    kind: OperationKind
    params: tuple[Param, ...]
    input_tables: tuple[str, ...]
    output_table: str | None
    produces_result: ResultKind
    span: Span
    statement_index: int
    link_inputs: tuple[str, ...] = ()
    """Tables named at this link itself (drives graph input edges)."""


@dataclass
class RegistryEntry:
    origin: str  # "loaded" | "derived"
    defining_snippet: str
    defining_op: str
    last_seen_snippet: str
    generation: int = 0
    defining_kind: OperationKind = OperationKind.OPAQUE
    node_id: str | None = None
    node_snippet: str | None = None
    node_generation: int = 0

    def as_dict(self) -> dict:
        return {
            "origin": self.origin,
            "defining_snippet": self.defining_snippet,
            "defining_op": self.defining_op,
            "last_seen_snippet": self.last_seen_snippet,
            "generation": self.generation,
            "defining_kind": self.defining_kind.value,
            "node_id": self.node_id,
            "node_snippet": self.node_snippet,
            "node_generation": self.node_generation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegistryEntry":
        d = dict(d)
        d["defining_kind"] = OperationKind(d["defining_kind"])
        return cls(**d)


class TableRegistry:
    """Conversation-global record of names known to hold tables."""

    def __init__(self):
        self.entries: dict[str, RegistryEntry] = {}

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def get(self, name: str) -> RegistryEntry | None:
        return self.entries.get(name)

    def register(self, name: str, *, origin: str, snippet_id: str, op_id: str,
                 kind: OperationKind) -> RegistryEntry:
        prior = self.entries.get(name)
        entry = RegistryEntry(
            origin=origin,
            defining_snippet=snippet_id,
            defining_op=op_id,
            last_seen_snippet=snippet_id,
            generation=prior.generation + 1 if prior else 0,
            defining_kind=kind,
            node_id=prior.node_id if prior else None,
            node_snippet=prior.node_snippet if prior else None,
            node_generation=prior.node_generation if prior else 0,
        )
        self.entries[name] = entry
        return entry

    def mark_seen(self, name: str, snippet_id: str) -> None:
        entry = self.entries.get(name)
        if entry:
            entry.last_seen_snippet = snippet_id

    def snapshot(self) -> dict:
        return {name: e.as_dict() for name, e in self.entries.items()}

    def restore(self, snap: dict) -> None:
        self.entries = {name: RegistryEntry.from_dict(d) for name, d in snap.items()}


def _load_table() -> dict:
    raw = resources.files("flowlens").joinpath("data/classification.json").read_text()
    return json.loads(raw)


CLASSIFICATION = _load_table()

_LOADER_NS = set(CLASSIFICATION["loader_namespaces"])
_PLOT_NS = set(CLASSIFICATION["plot_namespaces"])
_LOAD_CALLS = set(CLASSIFICATION["load_calls"])
_LOADER_MERGE = set(CLASSIFICATION["loader_merge_calls"])
_INSPECT = set(CLASSIFICATION["inspect_calls"])
_FILTER = set(CLASSIFICATION["filter_calls"])
_SORT = set(CLASSIFICATION["sort_calls"])
_TRANSFORM = set(CLASSIFICATION["transform_calls"])
_TRANSFORM_ACCESSORS = set(CLASSIFICATION["transform_accessors"])
_GROUP = set(CLASSIFICATION["group_calls"])
_AGG = set(CLASSIFICATION["aggregate_calls"])
_REDUCERS = set(CLASSIFICATION["reducer_calls"])
_MERGE = set(CLASSIFICATION["merge_calls"])
_VIS_ACCESSOR = CLASSIFICATION["visualize_accessor"]
_POSITIONAL = CLASSIFICATION["positional_params"]


def classify_call(callee: str, receiver_is_table: bool, args=(), *,
                  receiver_namespace: str | None = None,
                  group_context: bool = False) -> OperationKind:
    """Deterministic kind for one call link; unknown names degrade to opaque."""
    head = callee.split(".", 1)[0]
    if receiver_namespace == "plot":
        return OperationKind.VISUALIZE
    if receiver_namespace == "loader" or (not receiver_is_table and callee in _LOAD_CALLS):
        if callee in _LOAD_CALLS:
            return OperationKind.LOAD_DATA
        if callee in _LOADER_MERGE:
            return OperationKind.MERGE
        return OperationKind.OPAQUE
    if head == _VIS_ACCESSOR:
        return OperationKind.VISUALIZE
    if head in _TRANSFORM_ACCESSORS:
        return OperationKind.TRANSFORM
    if callee in _INSPECT:
        return OperationKind.INSPECT
    if callee in _FILTER:
        return OperationKind.FILTER
    if callee in _SORT:
        return OperationKind.SORT
    if callee in _TRANSFORM:
        return OperationKind.TRANSFORM
    if callee in _GROUP:
        return OperationKind.GROUP
    if callee in _AGG:
        return OperationKind.AGGREGATE
    if callee in _MERGE and (receiver_is_table or group_context):
        return OperationKind.MERGE
    if callee in _REDUCERS and (receiver_is_table or group_context):
        return OperationKind.AGGREGATE
    return OperationKind.OPAQUE


def _classify_subscript(index: SyntaxNode, accessor: str) -> OperationKind:
    """Column selection vs row filtering for a subscript link."""
    def column_like(node: SyntaxNode) -> bool:
        if node.kind is NodeKind.STRING_LIT or node.kind is NodeKind.NAME:
            return True
        if node.kind is NodeKind.LIST_EXPR:
            return all(c.kind is NodeKind.STRING_LIT for c in node.children)
        return False

    if accessor in ("loc", "iloc", "at", "iat") and index.kind is NodeKind.TUPLE_EXPR:
        cols = index.children[-1]
        return OperationKind.SELECT if column_like(cols) else OperationKind.FILTER
    if column_like(index):
        return OperationKind.SELECT
    if index.kind in (NodeKind.COMPARE, NodeKind.BOOL_OP, NodeKind.BIN_OP,
                      NodeKind.UNARY_OP, NodeKind.SLICE):
        return OperationKind.FILTER
    return OperationKind.SELECT


def _mentioned_tables(node: SyntaxNode, registry: TableRegistry) -> list[str]:
    seen: list[str] = []
    for sub in node.walk():
        if sub.kind is NodeKind.NAME and sub.label in registry and sub.label not in seen:
            seen.append(sub.label)
    return seen


_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _mentioned_in_text(text: str, registry: TableRegistry) -> list[str]:
    seen: list[str] = []
    for match in _WORD.finditer(text):
        word = match.group()
        if word in registry and word not in seen:
            seen.append(word)
    return seen


def _call_params(link: ChainLink) -> tuple[Param, ...]:
    callee = link.accessor.split(".")[-1]
    names = _POSITIONAL.get(callee, [])
    params: list[Param] = []
    pos = 0
    for child in link.call_args:
        if child.kind is NodeKind.KEYWORD_ARG:
            value = child.children[0]
            params.append(Param(child.label or "", value.text, value.span))
        else:
            name = names[pos] if pos < len(names) else f"arg{pos}"
            params.append(Param(name, child.text, child.span))
            pos += 1
    return tuple(params)


def _reducer_param(link: ChainLink) -> Param:
    # The method name itself is the aggregation function; its span allows
    # editing the reducer in place.
    name = link.accessor.split(".")[-1]
    func = link.node.children[0] if link.is_call else link.node
    name_span = Span(func.span.end_line, func.span.end_col - len(name),
                     func.span.end_line, func.span.end_col)
    return Param("func", name, name_span)


def _has_inplace(link: ChainLink) -> bool:
    for child in link.call_args:
        if child.kind is NodeKind.KEYWORD_ARG and child.label == "inplace":
            value = child.children[0]
            if value.kind is NodeKind.BOOL_LIT and value.label == "True":
                return True
    return False


def _link_span(link: ChainLink, prev: ChainLink | None, root: SyntaxNode) -> Span:
    if prev is None:
        start = root.span
    else:
        start = prev.node.span
    return Span(start.end_line if prev else start.start_line,
                start.end_col if prev else start.start_col,
                link.node.span.end_line, link.node.span.end_col)


class _StatementExtractor:
    def __init__(self, stmt: StatementUnit, registry: TableRegistry):
        self.stmt = stmt
        self.registry = registry
        self.ops: list[Operation] = []

    def _op_id(self) -> str:
        return f"{self.stmt.snippet_id}:{self.stmt.index}:{len(self.ops)}"

    def _emit(self, kind: OperationKind, *, params=(), inputs=(), link_inputs=(),
              output=None, result=ResultKind.NONE, span=None) -> Operation:
        op = Operation(
            id=self._op_id(),
            kind=kind,
            params=tuple(params),
            input_tables=tuple(inputs),
            output_table=output,
            produces_result=result,
            span=span or self.stmt.span,
            statement_index=self.stmt.index,
            link_inputs=tuple(link_inputs),
        )
        self.ops.append(op)
        return op

    def _register_output(self, name: str, op: Operation) -> None:
        origin = "loaded" if op.kind is OperationKind.LOAD_DATA else "derived"
        self.registry.register(name, origin=origin,
                               snippet_id=self.stmt.snippet_id,
                               op_id=op.id, kind=op.kind)

    def _opaque_fallback(self, tree: SyntaxNode | None) -> list[Operation]:
        # Word scan: opaque regions carry no Name children to walk.
        mentioned = _mentioned_in_text(self.stmt.source, self.registry)
        if not mentioned:
            return []
        output = None
        if tree is not None and tree.kind in (NodeKind.ASSIGN, NodeKind.AUG_ASSIGN):
            target = tree.children[0]
            if target.kind is NodeKind.NAME:
                if tree.kind is NodeKind.AUG_ASSIGN:
                    output = target.label if target.label in self.registry else None
                else:
                    output = target.label
        op = self._emit(OperationKind.OPAQUE, inputs=mentioned,
                        link_inputs=mentioned, output=output)
        for name in mentioned:
            self.registry.mark_seen(name, self.stmt.snippet_id)
        if output:
            self._register_output(output, op)
        return self.ops

    def _print_inspect(self, call: SyntaxNode) -> list[Operation]:
        args = call.children[1:]
        mentioned: list[str] = []
        for arg in args:
            for name in _mentioned_tables(arg, self.registry):
                if name not in mentioned:
                    mentioned.append(name)
        if not mentioned:
            return []
        params = tuple(
            Param("value", arg.text, arg.span)
            for arg in args if arg.kind is not NodeKind.KEYWORD_ARG
        )
        self._emit(OperationKind.INSPECT, params=params, inputs=mentioned,
                   link_inputs=mentioned, result=ResultKind.TEXT)
        for name in mentioned:
            self.registry.mark_seen(name, self.stmt.snippet_id)
        return self.ops

    def _visualize_statement(self, tree: SyntaxNode, links: list[ChainLink]) -> list[Operation]:
        mentioned = _mentioned_tables(tree, self.registry)
        if not mentioned:
            return []
        params = _call_params(links[0]) if links[0].is_call else ()
        self._emit(OperationKind.VISUALIZE, params=params, inputs=mentioned,
                   link_inputs=mentioned, result=ResultKind.FIGURE)
        for name in mentioned:
            self.registry.mark_seen(name, self.stmt.snippet_id)
        return self.ops

    def extract(self, tree: SyntaxNode | None) -> list[Operation]:
        if tree is None or tree.kind is NodeKind.OPAQUE:
            return self._opaque_fallback(tree)
        if tree.kind is NodeKind.AUG_ASSIGN:
            return self._opaque_fallback(tree)

        target: SyntaxNode | None = None
        if tree.kind is NodeKind.ASSIGN:
            target = tree.children[0]
            if target.kind not in (NodeKind.NAME, NodeKind.SUBSCRIPT):
                return self._opaque_fallback(tree)
            if target.kind is NodeKind.SUBSCRIPT:
                base = target.children[0]
                if base.kind is not NodeKind.NAME or base.label not in self.registry:
                    return self._opaque_fallback(tree)

        value = value_expr(tree)
        if value is None:
            return self._opaque_fallback(tree)

        if (tree.kind is NodeKind.EXPR_STMT and value.kind is NodeKind.CALL
                and value.children[0].kind is NodeKind.NAME
                and value.children[0].label == "print"):
            return self._print_inspect(value)

        links = chain_links(tree)
        root = links[0].receiver.label if links else None

        if links and root in _PLOT_NS and root not in self.registry:
            return self._visualize_statement(tree, links)

        chain_ok = links and (
            root in self.registry
            or root in _LOADER_NS
            or (links[0].is_call and links[0].receiver is links[0].node.children[0]
                and links[0].accessor in _LOAD_CALLS)
        )
        if not chain_ok:
            if target is not None and target.kind is NodeKind.SUBSCRIPT:
                self._add_column_cap(target, tree)
                return self.ops
            return self._opaque_fallback(tree)

        return self._chain(tree, target, links)

    def _chain(self, tree: SyntaxNode, target: SyntaxNode | None,
               links: list[ChainLink]) -> list[Operation]:
        root_node = links[0].receiver
        root_name = root_node.label or ""
        root_is_table = root_name in self.registry
        root_entry = self.registry.get(root_name)

        group_ctx = bool(root_entry and root_entry.defining_kind is OperationKind.GROUP)
        poisoned = bool(
            root_entry and root_entry.defining_kind is OperationKind.OPAQUE
            and root_entry.origin == "derived"
        )
        inplace_output: str | None = None
        prev: ChainLink | None = None

        for pos, link in enumerate(links):
            extra_inputs: list[str] = []
            if link.is_call:
                for arg in link.call_args:
                    for name in _mentioned_tables(arg, self.registry):
                        if name != root_name and name not in extra_inputs:
                            extra_inputs.append(name)
            elif link.is_subscript:
                for name in _mentioned_tables(link.node.children[1], self.registry):
                    if name != root_name and name not in extra_inputs:
                        extra_inputs.append(name)

            if link.is_subscript:
                kind = _classify_subscript(link.node.children[1], link.accessor)
            elif link.is_call:
                if pos == 0 and not root_is_table and root_name in _LOADER_NS:
                    kind = classify_call(link.accessor, False, receiver_namespace="loader")
                elif pos == 0 and link.receiver is link.node.children[0]:
                    kind = classify_call(link.accessor, False)
                else:
                    table_ctx = (root_is_table or pos > 0) and not poisoned
                    kind = classify_call(link.accessor, table_ctx, group_context=group_ctx)
            else:
                name = link.accessor.split(".")[-1]
                kind = OperationKind.INSPECT if name in _INSPECT else OperationKind.OPAQUE

            if kind is OperationKind.OPAQUE:
                poisoned = True
            if kind is OperationKind.GROUP:
                group_ctx = True

            if link.is_subscript:
                index = link.node.children[1]
                pname = "columns" if kind is OperationKind.SELECT else "condition"
                params: tuple[Param, ...] = (Param(pname, index.text, index.span),)
            elif link.is_call:
                if kind is OperationKind.AGGREGATE and not link.call_args:
                    params = (_reducer_param(link),)
                else:
                    params = _call_params(link)
            else:
                params = ()

            inputs: list[str] = []
            if root_is_table:
                inputs.append(root_name)
            inputs.extend(extra_inputs)
            link_inputs = list(inputs) if pos == 0 else list(extra_inputs)

            if kind is OperationKind.LOAD_DATA:
                inputs, link_inputs = [], []
            if kind is OperationKind.MERGE and not inputs:
                # A merge with no known tables is no data operation we can trace.
                kind = OperationKind.OPAQUE
                poisoned = True

            self._emit(kind, params=params, inputs=inputs,
                       link_inputs=link_inputs,
                       result=(ResultKind.FIGURE if kind is OperationKind.VISUALIZE
                               else ResultKind.NONE),
                       span=_link_span(link, prev, root_node))
            if link.is_call and _has_inplace(link) and root_is_table:
                inplace_output = root_name
            prev = link

        if root_is_table:
            self.registry.mark_seen(root_name, self.stmt.snippet_id)
        for op in self.ops:
            for name in op.link_inputs:
                self.registry.mark_seen(name, self.stmt.snippet_id)

        last = self.ops[-1]
        if target is not None and target.kind is NodeKind.NAME:
            if last.kind is not OperationKind.VISUALIZE:
                updated = replace(last, output_table=target.label)
                self.ops[-1] = updated
                self._register_output(target.label or "", updated)
        elif target is not None and target.kind is NodeKind.SUBSCRIPT:
            self._add_column_cap(target, tree)
        elif inplace_output:
            updated = replace(last, output_table=inplace_output)
            self.ops[-1] = updated
            self._register_output(inplace_output, updated)
        elif last.kind in (OperationKind.INSPECT, OperationKind.AGGREGATE):
            self.ops[-1] = replace(last, produces_result=ResultKind.TEXT)
        return self.ops

    def _add_column_cap(self, target: SyntaxNode, tree: SyntaxNode) -> None:
        base, index = target.children
        table = base.label or ""
        params = [Param("column", index.text, index.span)]
        if len(self.ops) == 0:
            value = tree.children[1]
            params.append(Param("value", value.text, value.span))
            inputs = [table] + [n for n in _mentioned_tables(value, self.registry)
                                if n != table]
            link_inputs = inputs
        else:
            inputs = [table]
            # The chain already flows in; only draw a table edge when the
            # column target is a different table than the chain root.
            link_inputs = [] if table in self.ops[0].input_tables else [table]
        op = self._emit(OperationKind.ADD_COLUMN, params=params, inputs=inputs,
                        link_inputs=link_inputs, output=table, span=tree.span)
        self.registry.mark_seen(table, self.stmt.snippet_id)
        self._register_output(table, op)


def extract_operations(stmt: StatementUnit, tree: SyntaxNode | None,
                       registry: TableRegistry) -> list[Operation]:
    """Extract the ordered operations of one statement, updating the registry.

    Extraction is total: statements we cannot interpret yield one opaque
    operation when they touch known tables and nothing otherwise.
    """
    return _StatementExtractor(stmt, registry).extract(tree)
