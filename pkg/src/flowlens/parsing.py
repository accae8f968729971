"""Parse one statement into a small syntax tree for dataframe-analysis code.

The grammar covers assignments, expression statements, calls, attribute and
subscript access, literals, comparisons, boolean/arithmetic operators, and
lambdas (kept verbatim).  Anything outside the grammar becomes an ``Opaque``
node carrying its exact text, so instrumentation and patching can round-trip
regions we do not model.  Every node's span slices the snippet back to the
node's text exactly.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from enum import Enum

from .spans import LineIndex, Span
from .streaming import StatementUnit


class NodeKind(str, Enum):
    ASSIGN = "Assign"
    AUG_ASSIGN = "AugAssign"
    EXPR_STMT = "ExprStmt"
    CALL = "Call"
    ATTRIBUTE = "Attribute"
    SUBSCRIPT = "Subscript"
    NAME = "Name"
    STRING_LIT = "StringLit"
    NUMBER_LIT = "NumberLit"
    BOOL_LIT = "BoolLit"
    NONE_LIT = "NoneLit"
    LIST_EXPR = "ListExpr"
    DICT_EXPR = "DictExpr"
    TUPLE_EXPR = "TupleExpr"
    COMPARE = "Compare"
    BOOL_OP = "BoolOp"
    BIN_OP = "BinOp"
    UNARY_OP = "UnaryOp"
    LAMBDA = "Lambda"
    KEYWORD_ARG = "KeywordArg"
    SLICE = "Slice"
    OPAQUE = "Opaque"


@dataclass(frozen=True)
class SyntaxNode:
    kind: NodeKind
    children: tuple["SyntaxNode", ...]
    span: Span
    text: str
    label: str | None = None

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class Diagnostic:
    span: Span
    message: str
    severity: str = "error"


@dataclass(frozen=True)
class ParseOutcome:
    tree: SyntaxNode | None
    diagnostics: tuple[Diagnostic, ...] = ()


_BIN_OPS = {
    ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/",
    ast.FloorDiv: "//", ast.Mod: "%", ast.Pow: "**", ast.MatMult: "@",
    ast.LShift: "<<", ast.RShift: ">>", ast.BitAnd: "&", ast.BitOr: "|",
    ast.BitXor: "^",
}
_CMP_OPS = {
    ast.Eq: "==", ast.NotEq: "!=", ast.Lt: "<", ast.LtE: "<=",
    ast.Gt: ">", ast.GtE: ">=", ast.In: "in", ast.NotIn: "not in",
    ast.Is: "is", ast.IsNot: "is not",
}
_UNARY_OPS = {ast.USub: "-", ast.UAdd: "+", ast.Not: "not", ast.Invert: "~"}


class _Builder:
    """Converts stdlib AST nodes to SyntaxNodes in snippet coordinates."""

    def __init__(self, stmt: StatementUnit):
        self.stmt = stmt
        self.index = LineIndex(stmt.source)
        self.lines = stmt.source.split("\n")

    def _pos(self, lineno: int, col_bytes: int) -> tuple[int, int]:
        raw = self.lines[lineno - 1].encode("utf-8")
        col = len(raw[:col_bytes].decode("utf-8"))
        line = self.stmt.span.start_line + lineno - 1
        if lineno == 1:
            col += self.stmt.span.start_col
        return line, col

    def span_of(self, node: ast.AST) -> Span:
        sl, sc = self._pos(node.lineno, node.col_offset)
        el, ec = self._pos(node.end_lineno, node.end_col_offset)
        return Span(sl, sc, el, ec)

    def text_of(self, node: ast.AST) -> str:
        rel_start = (
            self.index.offset(node.lineno, 0)
            + len(self.lines[node.lineno - 1].encode()[: node.col_offset].decode())
        )
        rel_end = (
            self.index.offset(node.end_lineno, 0)
            + len(self.lines[node.end_lineno - 1].encode()[: node.end_col_offset].decode())
        )
        return self.stmt.source[rel_start:rel_end]

    def make(self, node: ast.AST, kind: NodeKind, children=(), label=None) -> SyntaxNode:
        return SyntaxNode(
            kind=kind,
            children=tuple(children),
            span=self.span_of(node),
            text=self.text_of(node),
            label=label,
        )

    def opaque(self, node: ast.AST) -> SyntaxNode:
        return self.make(node, NodeKind.OPAQUE)

    def statement(self, node: ast.stmt) -> SyntaxNode:
        if isinstance(node, ast.Assign) and len(node.targets) == 1:
            return self.make(
                node, NodeKind.ASSIGN,
                [self.expr(node.targets[0]), self.expr(node.value)],
            )
        if isinstance(node, ast.AugAssign):
            op = _BIN_OPS.get(type(node.op), "?")
            return self.make(
                node, NodeKind.AUG_ASSIGN,
                [self.expr(node.target), self.expr(node.value)],
                label=op + "=",
            )
        if isinstance(node, ast.Expr):
            return self.make(node, NodeKind.EXPR_STMT, [self.expr(node.value)])
        return self.opaque(node)

    def expr(self, node: ast.expr) -> SyntaxNode:
        if isinstance(node, ast.Call):
            children = [self.expr(node.func)]
            children.extend(self.expr(a) for a in node.args)
            children.extend(self.keyword(k) for k in node.keywords)
            return self.make(node, NodeKind.CALL, children)
        if isinstance(node, ast.Attribute):
            return self.make(node, NodeKind.ATTRIBUTE, [self.expr(node.value)],
                             label=node.attr)
        if isinstance(node, ast.Subscript):
            return self.make(node, NodeKind.SUBSCRIPT,
                             [self.expr(node.value), self.expr(node.slice)])
        if isinstance(node, ast.Name):
            return self.make(node, NodeKind.NAME, label=node.id)
        if isinstance(node, ast.Constant):
            value = node.value
            if isinstance(value, bool):
                return self.make(node, NodeKind.BOOL_LIT, label=str(value))
            if value is None:
                return self.make(node, NodeKind.NONE_LIT)
            if isinstance(value, str):
                return self.make(node, NodeKind.STRING_LIT, label=value)
            if isinstance(value, (int, float, complex)):
                return self.make(node, NodeKind.NUMBER_LIT, label=repr(value))
            return self.opaque(node)
        if isinstance(node, ast.List):
            return self.make(node, NodeKind.LIST_EXPR,
                             [self.expr(e) for e in node.elts])
        if isinstance(node, ast.Tuple):
            return self.make(node, NodeKind.TUPLE_EXPR,
                             [self.expr(e) for e in node.elts])
        if isinstance(node, ast.Dict):
            children = []
            for key, value in zip(node.keys, node.values):
                if key is None:
                    children.append(self.opaque(value))
                else:
                    children.append(self.expr(key))
                    children.append(self.expr(value))
            return self.make(node, NodeKind.DICT_EXPR, children)
        if isinstance(node, ast.Compare):
            ops = " ".join(_CMP_OPS.get(type(op), "?") for op in node.ops)
            return self.make(
                node, NodeKind.COMPARE,
                [self.expr(node.left)] + [self.expr(c) for c in node.comparators],
                label=ops,
            )
        if isinstance(node, ast.BoolOp):
            label = "and" if isinstance(node.op, ast.And) else "or"
            return self.make(node, NodeKind.BOOL_OP,
                             [self.expr(v) for v in node.values], label=label)
        if isinstance(node, ast.BinOp):
            return self.make(node, NodeKind.BIN_OP,
                             [self.expr(node.left), self.expr(node.right)],
                             label=_BIN_OPS.get(type(node.op), "?"))
        if isinstance(node, ast.UnaryOp):
            return self.make(node, NodeKind.UNARY_OP, [self.expr(node.operand)],
                             label=_UNARY_OPS.get(type(node.op), "?"))
        if isinstance(node, ast.Lambda):
            # Kept as one verbatim leaf; the body is never analyzed.
            return self.make(node, NodeKind.LAMBDA)
        if isinstance(node, ast.Slice):
            children = [self.expr(p) for p in (node.lower, node.upper, node.step) if p]
            return self.make(node, NodeKind.SLICE, children)
        return self.opaque(node)

    def keyword(self, node: ast.keyword) -> SyntaxNode:
        if node.arg is None:
            return self.opaque(node.value)
        return self.make(node, NodeKind.KEYWORD_ARG, [self.expr(node.value)],
                         label=node.arg)


def parse_statement(stmt: StatementUnit) -> ParseOutcome:
    """Parse one complete statement; never raises on valid analysis code."""
    try:
        module = ast.parse(stmt.source)
    except SyntaxError as err:
        line = stmt.span.start_line + (err.lineno or 1) - 1
        col = (err.offset or 1) - 1
        if (err.lineno or 1) == 1:
            col += stmt.span.start_col
        diag = Diagnostic(Span(line, col, line, col + 1), err.msg or "syntax error")
        return ParseOutcome(None, (diag,))
    builder = _Builder(stmt)
    if len(module.body) != 1:
        # Empty or multi-statement source (the scanner emits one at a time).
        node = SyntaxNode(NodeKind.OPAQUE, (), stmt.span, stmt.source)
        return ParseOutcome(node)
    return ParseOutcome(builder.statement(module.body[0]))


@dataclass(frozen=True)
class ChainLink:
    """One application in a fluent chain, outermost receiver first."""

    node: SyntaxNode
    receiver: SyntaxNode
    accessor: str
    is_call: bool
    is_subscript: bool

    @property
    def call_args(self) -> tuple[SyntaxNode, ...]:
        if not self.is_call:
            return ()
        return self.node.children[1:]


def value_expr(tree: SyntaxNode) -> SyntaxNode | None:
    """The right-hand expression of an assignment or expression statement."""
    if tree.kind is NodeKind.ASSIGN:
        return tree.children[1]
    if tree.kind is NodeKind.EXPR_STMT:
        return tree.children[0]
    return None


def _fold_attributes(node: SyntaxNode) -> tuple[SyntaxNode, list[str]]:
    parts: list[str] = []
    while node.kind is NodeKind.ATTRIBUTE:
        parts.append(node.label or "")
        node = node.children[0]
    parts.reverse()
    return node, parts


def chain_links(tree: SyntaxNode) -> list[ChainLink]:
    """Left-to-right chained call/subscript applications rooted at a Name.

    Returns the empty list when the statement's value is not a chain.  A bare
    ``f(x)`` call counts as a single link whose receiver is the name itself;
    a trailing bare attribute (``df.shape``) is a link with no call.
    """
    value = value_expr(tree)
    if value is None:
        return []
    links: list[ChainLink] = []
    node = value
    while True:
        if node.kind is NodeKind.CALL:
            func = node.children[0]
            if func.kind is NodeKind.ATTRIBUTE:
                base, parts = _fold_attributes(func)
                links.append(ChainLink(node, base, ".".join(parts), True, False))
                node = base
            elif func.kind is NodeKind.NAME:
                links.append(ChainLink(node, func, func.label or "", True, False))
                node = func
                break
            else:
                return []
        elif node.kind is NodeKind.SUBSCRIPT:
            base = node.children[0]
            if base.kind is NodeKind.ATTRIBUTE:
                folded, parts = _fold_attributes(base)
                links.append(ChainLink(node, folded, ".".join(parts), False, True))
                node = folded
            else:
                links.append(ChainLink(node, base, "[]", False, True))
                node = base
        elif node.kind is NodeKind.ATTRIBUTE and node is value:
            base, parts = _fold_attributes(node)
            links.append(ChainLink(node, base, ".".join(parts), False, False))
            node = base
        elif node.kind is NodeKind.NAME:
            break
        else:
            return []
    if node.kind is not NodeKind.NAME:
        return []
    links.reverse()
    return links
