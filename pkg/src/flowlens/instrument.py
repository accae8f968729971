"""Rewrite snippets into standalone, probe-instrumented statements.

Method chains are refactored so each link becomes its own assignment to a
reserved synthetic name (prefix ``__wg``); after every statement that can
yield a table, a generated probe statement reports the table's shape over a
sentinel stdout channel, and statements that draw figures are followed by a
figure-capture probe.  Probes are injected post hoc as plain analysis-language
code (see ``templates/``), so instrumented programs run under any interpreter
transport; they never mutate user-visible variables.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from string import Template

from .extract import Operation, OperationKind, ResultKind
from .parsing import NodeKind, SyntaxNode, chain_links, value_expr
from .spans import LineIndex, Span
from .streaming import StatementUnit

PROBE_SENTINEL = "##WAITGRAPH v1## "
SYNTHETIC_PREFIX = "__wg"

_SYNTHETIC_RE = re.compile(r"__wg(\d+)")

_TABLE_TMPL = Template(
    resources.files("flowlens").joinpath("templates/table_probe.tmpl").read_text()
)
_FIGURE_TMPL = Template(
    resources.files("flowlens").joinpath("templates/figure_probe.tmpl").read_text()
)


@dataclass(frozen=True)
class ExecUnit:
    unit_id: str
    code: str
    kind: str  # "user" | "probe"
    snippet_id: str
    statement_index: int
    probe_id: str | None = None
    op_ids: tuple[str, ...] = ()
    """Operations this user unit embodies (one per split link)."""

    def as_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "code": self.code,
            "kind": self.kind,
            "snippet_id": self.snippet_id,
            "statement_index": self.statement_index,
            "probe_id": self.probe_id,
            "op_ids": list(self.op_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecUnit":
        d = dict(d)
        d["op_ids"] = tuple(d.get("op_ids", ()))
        return cls(**d)


@dataclass
class InstrumentedProgram:
    units: list[ExecUnit] = field(default_factory=list)
    bindings: dict[str, str] = field(default_factory=dict)  # probe_id -> node id
    split_map: dict[str, Span] = field(default_factory=dict)  # synthetic -> link span

    def extend(self, other: "InstrumentedProgram") -> None:
        self.units.extend(other.units)
        self.bindings.update(other.bindings)
        self.split_map.update(other.split_map)


def table_probe_code(probe_id: str, var: str) -> str:
    return _TABLE_TMPL.substitute(
        var=var, var_json=json.dumps(var), probe_json=json.dumps(probe_id)
    ).rstrip("\n")


def figure_probe_code() -> str:
    return _FIGURE_TMPL.template.rstrip("\n")


@dataclass(frozen=True)
class _Part:
    code: str
    assigned: str | None     # name the part binds (synthetic or user)
    synthetic: str | None    # synthetic name introduced, if any


def _relative_offset(stmt: StatementUnit, index: LineIndex, line: int, col: int) -> int:
    rel_line = line - stmt.span.start_line + 1
    rel_col = col - (stmt.span.start_col if rel_line == 1 else 0)
    return index.offset(rel_line, rel_col)


def _paren(expr: str) -> str:
    return f"({expr})" if "\n" in expr else expr


def _split_parts(stmt: StatementUnit, tree: SyntaxNode, *, cap: bool,
                 alloc) -> list[_Part] | None:
    """Split a chain statement into per-link parts; None when not splittable."""
    links = chain_links(tree)
    if len(links) < 2 and not (cap and len(links) >= 1):
        return None
    index = LineIndex(stmt.source)
    spans = []
    root = links[0].receiver
    start = _relative_offset(stmt, index, root.span.start_line, root.span.start_col)
    for link in links:
        end = _relative_offset(stmt, index, link.node.span.end_line, link.node.span.end_col)
        spans.append((start, end))
        start = end

    parts: list[_Part] = []
    prev_name: str | None = None
    for k, (a, b) in enumerate(spans):
        expr = stmt.source[a:b] if k == 0 else prev_name + stmt.source[a:b]
        last_link = k == len(spans) - 1
        if last_link and not cap and tree.kind is NodeKind.ASSIGN:
            target = tree.children[0]
            parts.append(_Part(f"{target.text} = {_paren(expr)}",
                               target.label if target.kind is NodeKind.NAME else None,
                               None))
        else:
            name = alloc()
            parts.append(_Part(f"{name} = {_paren(expr)}", name, name))
            prev_name = name
    if cap:
        target = tree.children[0]
        parts.append(_Part(f"{target.text} = {prev_name}", None, None))
    return parts


class Instrumenter:
    """Builds the instrumented program for one snippet, statement by statement."""

    def __init__(self, snippet_id: str):
        self.snippet_id = snippet_id
        self.program = InstrumentedProgram()
        self._counter = 0
        self._unit_count = 0

    def _alloc(self) -> str:
        name = f"{SYNTHETIC_PREFIX}{self._counter}"
        self._counter += 1
        return name

    def _reserve_past(self, source: str) -> None:
        for match in _SYNTHETIC_RE.finditer(source):
            self._counter = max(self._counter, int(match.group(1)) + 1)

    def _unit(self, code: str, kind: str, statement_index: int,
              probe_id: str | None = None, op_ids: tuple[str, ...] = ()) -> ExecUnit:
        unit = ExecUnit(
            unit_id=f"u:{self.snippet_id}:{self._unit_count}",
            code=code,
            kind=kind,
            snippet_id=self.snippet_id,
            statement_index=statement_index,
            probe_id=probe_id,
            op_ids=op_ids,
        )
        self._unit_count += 1
        self.program.units.append(unit)
        return unit

    def _probe_unit(self, op: Operation, var: str | None) -> None:
        probe_id = f"p:{op.id}"
        node_id = f"op:{op.id}"
        if op.produces_result is ResultKind.FIGURE:
            self._unit(figure_probe_code(), "probe", op.statement_index, probe_id)
        elif var:
            self._unit(table_probe_code(probe_id, var), "probe",
                       op.statement_index, probe_id)
        else:
            return
        self.program.bindings[probe_id] = node_id

    def add_statement(self, stmt: StatementUnit, tree: SyntaxNode | None,
                      ops: list[Operation]) -> list[ExecUnit]:
        """Instrument one statement; returns the units it contributed."""
        before = len(self.program.units)
        self._reserve_past(stmt.source)

        if tree is None or not ops:
            self._unit(stmt.source, "user", stmt.index)
            return self.program.units[before:]

        cap = ops[-1].kind is OperationKind.ADD_COLUMN and len(ops) > 1
        n_link_ops = len(ops) - (1 if cap else 0)
        parts = None
        if n_link_ops >= 2 or (cap and n_link_ops >= 1):
            parts = _split_parts(stmt, tree, cap=cap, alloc=self._alloc)
            if parts is not None and len(parts) != len(ops):
                parts = None  # alignment failed; execute unsplit

        if parts is None:
            op = ops[-1]
            code = stmt.source
            var = op.output_table
            if (var is None and tree.kind is NodeKind.EXPR_STMT
                    and op.produces_result is not ResultKind.FIGURE
                    and op.kind is not OperationKind.OPAQUE
                    and not _is_print(tree)):
                name = self._alloc()
                code = f"{name} = {_paren(stmt.source)}"
                var = name
                self.program.split_map[name] = op.span
            elif var is None and tree.kind is NodeKind.ASSIGN:
                target = tree.children[0]
                if target.kind is NodeKind.NAME:
                    var = target.label
            self._unit(code, "user", stmt.index,
                       op_ids=tuple(o.id for o in ops))
            self._probe_unit(op, var)
            return self.program.units[before:]

        for part, op in zip(parts, ops):
            self._unit(part.code, "user", stmt.index, op_ids=(op.id,))
            if part.synthetic:
                self.program.split_map[part.synthetic] = op.span
            var = op.output_table or part.assigned
            self._probe_unit(op, var)
        return self.program.units[before:]


def _is_print(tree: SyntaxNode) -> bool:
    value = value_expr(tree)
    return (
        value is not None
        and value.kind is NodeKind.CALL
        and value.children[0].kind is NodeKind.NAME
        and value.children[0].label == "print"
    )


def split_chains(tree: SyntaxNode, stmt: StatementUnit | None = None) -> list[str]:
    """Refactor a fluent chain into standalone statements.

    Each link becomes ``<synthetic> = <prev>.<link>``; the final link keeps
    the statement's original assignment target.  Non-chain and opaque
    statements pass through unchanged.
    """
    if stmt is None:
        stmt = StatementUnit("s0", 0, tree.text, tree.span)
    counter = [0]
    for match in _SYNTHETIC_RE.finditer(stmt.source):
        counter[0] = max(counter[0], int(match.group(1)) + 1)

    def alloc():
        name = f"{SYNTHETIC_PREFIX}{counter[0]}"
        counter[0] += 1
        return name

    parts = _split_parts(stmt, tree, cap=False, alloc=alloc)
    if parts is None:
        return [stmt.source]
    return [p.code for p in parts]


def plan_probes(ops: list[Operation], split_statements: list[str],
                snippet_id: str = "s0") -> InstrumentedProgram:
    """Attach probes to already-split statements of one statement group.

    Each statement that binds a table value gets one shape probe; operations
    that draw figures get a figure-capture probe instead.  ``bindings`` maps
    every probe to its operation node.
    """
    program = InstrumentedProgram()
    inst = Instrumenter(snippet_id)
    inst.program = program
    aligned = len(split_statements) == len(ops)
    for k, code in enumerate(split_statements):
        op = ops[k] if aligned else (ops[-1] if ops and k == len(split_statements) - 1 else None)
        stmt_index = op.statement_index if op else 0
        inst._unit(code, "user", stmt_index, op_ids=(op.id,) if op else ())
        if op is None:
            continue
        var = op.output_table or _assigned_name(code)
        if var and var.startswith(SYNTHETIC_PREFIX):
            program.split_map[var] = op.span
        inst._probe_unit(op, var)
    return program


def _assigned_name(code: str) -> str | None:
    try:
        module = ast.parse(code)
    except SyntaxError:
        return None
    if len(module.body) == 1 and isinstance(module.body[0], ast.Assign):
        target = module.body[0].targets[0]
        if isinstance(target, ast.Name):
            return target.id
    return None
