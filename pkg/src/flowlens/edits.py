"""Translate node-level edits into byte-exact source patches.

Edits operate on the verbatim value spans recorded at extraction; untouched
code is never reformatted.  Direct parameter edits patch in place; language-
model rewrites replace whole statements and keep the prior version as comment
lines directly above the replacement, so uncommenting restores it exactly.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field

from .errors import RewriteRejectedError, StaleSpanError, UnknownNodeError
from .graph import Diagram, OperationNode
from .spans import LineIndex, Span
from .streaming import split_statements

COMMENT_MARK = "# "


@dataclass(frozen=True)
class ParamEdit:
    node_id: str
    param_name: str
    new_value: str

    def as_dict(self) -> dict:
        return {"node_id": self.node_id, "param_name": self.param_name,
                "new_value": self.new_value}

    def payload(self) -> str:
        """Canonical wire payload: fixed key order, no whitespace.

        Any client (UI or direct caller) sending the same edit must produce
        these exact bytes.
        """
        return json.dumps(
            {"node_id": self.node_id, "param_name": self.param_name,
             "new_value": self.new_value},
            separators=(",", ":"),
        )


@dataclass(frozen=True)
class CodePatch:
    snippet_id: str
    edits: tuple[tuple[Span, str], ...]
    resulting_source: str
    revision: int

    @property
    def is_noop(self) -> bool:
        return not self.edits

    def to_wire(self, prior_source: str) -> dict:
        """Exchange format with UTF-8 byte offsets."""
        index = LineIndex(prior_source)
        return {
            "snippet_id": self.snippet_id,
            "revision": self.revision,
            "edits": [
                {
                    "start": index.byte_offsets(span)[0],
                    "end": index.byte_offsets(span)[1],
                    "replacement": replacement,
                }
                for span, replacement in self.edits
            ],
        }


@dataclass(frozen=True)
class RevisionPair:
    commented_previous: str
    active_current: str

    def restore_previous(self) -> str:
        lines = []
        for line in self.commented_previous.split("\n"):
            if not line.startswith(COMMENT_MARK):
                raise StaleSpanError(f"line is not a comment: {line!r}")
            lines.append(line[len(COMMENT_MARK):])
        return "\n".join(lines)


def apply_edits(source: str, edits) -> str:
    """Apply span replacements; spans must not overlap."""
    index = LineIndex(source)
    offsets = sorted(
        ((index.offsets(span), replacement) for span, replacement in edits),
        key=lambda item: item[0][0],
    )
    for ((_, end_a), _), (((start_b, _), _)) in zip(offsets, offsets[1:]):
        if end_a > start_b:
            raise StaleSpanError("edit spans overlap")
    result = source
    for (start, end), replacement in reversed(offsets):
        result = result[:start] + replacement + result[end:]
    return result


def _find_operation_node(diagram: Diagram, node_id: str) -> OperationNode:
    node = diagram.nodes.get(node_id)
    if node is None or not isinstance(node, OperationNode):
        raise UnknownNodeError(f"no operation node {node_id!r}")
    return node


def apply_param_edit(source: str, diagram: Diagram, edit: ParamEdit,
                     revision: int = 0) -> CodePatch:
    """Replace one parameter value at its recorded span, byte-exactly.

    Editing to the identical value is a no-op patch with an unchanged
    revision.  A span that no longer slices to the recorded value means the
    source moved since extraction and demands re-extraction.
    """
    node = _find_operation_node(diagram, edit.node_id)
    params = [p for p in node.operation.params if p.name == edit.param_name]
    if not params:
        raise UnknownNodeError(
            f"node {edit.node_id} has no parameter {edit.param_name!r}"
        )
    param = params[0]
    index = LineIndex(source)
    try:
        current = index.slice(param.span)
    except IndexError:
        raise StaleSpanError(
            f"span of {edit.param_name!r} is outside the current source"
        )
    if current != param.value:
        raise StaleSpanError(
            f"source drifted under {edit.param_name!r}: expected "
            f"{param.value!r}, found {current!r}; re-extract first"
        )
    if edit.new_value == param.value:
        return CodePatch(diagram.snippet_id, (), source, revision)
    try:
        ast.parse(edit.new_value, mode="eval")
    except SyntaxError as exc:
        raise RewriteRejectedError(
            f"replacement value does not parse: {exc.msg}"
        ) from exc
    edits = ((param.span, edit.new_value),)
    return CodePatch(
        snippet_id=diagram.snippet_id,
        edits=edits,
        resulting_source=apply_edits(source, edits),
        revision=revision + 1,
    )


def apply_llm_rewrite(source: str, diagram: Diagram, node_id: str,
                      suggestion: str, revision: int = 0) -> tuple[CodePatch, RevisionPair | None]:
    """Replace the statement owning a node, keeping the old lines as comments.

    The suggestion must parse; otherwise it is rejected and the source is
    untouched.  A suggestion identical to the current statement is a no-op.
    """
    node = _find_operation_node(diagram, node_id)
    suggestion = suggestion.strip("\n")
    try:
        ast.parse(suggestion)
    except SyntaxError as exc:
        raise RewriteRejectedError(f"suggestion does not parse: {exc.msg}") from exc

    statements = split_statements(source, diagram.snippet_id)
    stmt_index = node.operation.statement_index
    if stmt_index >= len(statements):
        raise StaleSpanError("statement owning the node no longer exists")
    stmt = statements[stmt_index]
    if suggestion == stmt.source:
        return CodePatch(diagram.snippet_id, (), source, revision), None

    commented = "\n".join(COMMENT_MARK + line for line in stmt.source.split("\n"))
    replacement = commented + "\n" + suggestion
    pair = RevisionPair(commented_previous=commented, active_current=suggestion)
    edits = ((stmt.span, replacement),)
    patch = CodePatch(
        snippet_id=diagram.snippet_id,
        edits=edits,
        resulting_source=apply_edits(source, edits),
        revision=revision + 1,
    )
    return patch, pair
