import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlens.parsing import NodeKind, chain_links, parse_statement
from flowlens.spans import LineIndex
from flowlens.streaming import split_statements


def stmt_of(text, index=0):
    return split_statements(text)[index]


def tree_of(text):
    outcome = parse_statement(stmt_of(text))
    assert outcome.tree is not None, outcome.diagnostics
    return outcome.tree


def test_paper_chain_shape():
    tree = tree_of('merge_df = df[["attr_1", "attr_2"]].sort()')
    assert tree.kind is NodeKind.ASSIGN
    target, value = tree.children
    assert target.kind is NodeKind.NAME and target.label == "merge_df"
    assert value.kind is NodeKind.CALL
    func = value.children[0]
    assert func.kind is NodeKind.ATTRIBUTE and func.label == "sort"
    sub = func.children[0]
    assert sub.kind is NodeKind.SUBSCRIPT
    base, index = sub.children
    assert base.kind is NodeKind.NAME and base.label == "df"
    assert index.kind is NodeKind.LIST_EXPR
    assert [c.kind for c in index.children] == [NodeKind.STRING_LIT] * 2
    assert [c.text for c in index.children] == ['"attr_1"', '"attr_2"']


def test_minimal_statement():
    tree = tree_of("x")
    assert tree.kind is NodeKind.EXPR_STMT
    assert tree.children[0].kind is NodeKind.NAME
    assert tree.children[0].label == "x"


def test_lambda_is_verbatim_leaf():
    tree = tree_of("df['n'] = df['a'].apply(lambda v: v*2)")
    target, value = tree.children
    assert target.kind is NodeKind.SUBSCRIPT
    assert value.kind is NodeKind.CALL
    lam = value.children[1]
    assert lam.kind is NodeKind.LAMBDA
    assert lam.children == ()
    assert lam.text == "lambda v: v*2"


def test_keyword_argument():
    tree = tree_of('merged = students.merge(scores, on="id")')
    call = tree.children[1]
    pos_arg, kw = call.children[1], call.children[2]
    assert pos_arg.kind is NodeKind.NAME and pos_arg.label == "scores"
    assert kw.kind is NodeKind.KEYWORD_ARG and kw.label == "on"
    assert kw.children[0].text == '"id"'


def test_boolean_compare_subscript():
    tree = tree_of('kept = df[df["score"] > 10]')
    sub = tree.children[1]
    assert sub.kind is NodeKind.SUBSCRIPT
    cond = sub.children[1]
    assert cond.kind is NodeKind.COMPARE
    assert cond.label == ">"


@pytest.mark.parametrize("source,kind", [
    ("import pandas as pd", NodeKind.OPAQUE),
    ("for c in df.columns:\n    print(c)", NodeKind.OPAQUE),
    ("del x", NodeKind.OPAQUE),
    ("def f():\n    return 1", NodeKind.OPAQUE),
    ("x += 1", NodeKind.AUG_ASSIGN),
])
def test_out_of_grammar_statements_are_opaque(source, kind):
    tree = tree_of(source)
    assert tree.kind is kind
    assert tree.text == source


def test_tuple_assignment_parses_with_tuple_target():
    tree = tree_of("a, b = 1, 2")
    assert tree.kind is NodeKind.ASSIGN
    assert tree.children[0].kind is NodeKind.TUPLE_EXPR


def test_irrecoverable_syntax_reports_diagnostics():
    outcome = parse_statement(stmt_of("x = ) weird"))
    assert outcome.tree is None
    assert outcome.diagnostics
    assert outcome.diagnostics[0].severity == "error"


SPAN_SOURCES = [
    'merge_df = df[["attr_1", "attr_2"]].sort()',
    'df = pd.read_csv("scores.csv", sep=";")',
    'avg = merged.groupby("background")["score"].mean()',
    'df["total"] = df["price"] * df["stock"]',
    'flag = (df["a"] > 1) & (df["b"] < 2)',
    "x = {'k': [1, 2], 'j': (3, 4)}",
    "y = -5 + 2 ** 3",
    "ok = not df.empty",
]


@pytest.mark.parametrize("source", SPAN_SOURCES)
def test_every_node_span_slices_to_its_text(source):
    snippet = f"# leading comment\n{source}\n"
    unit = split_statements(snippet)[0]
    tree = parse_statement(unit).tree
    index = LineIndex(snippet)
    for node in tree.walk():
        assert index.slice(node.span) == node.text


def test_multiline_statement_spans():
    snippet = 'result = df.merge(\n    other,\n    on="id",\n)\n'
    unit = split_statements(snippet)[0]
    tree = parse_statement(unit).tree
    index = LineIndex(snippet)
    for node in tree.walk():
        assert index.slice(node.span) == node.text


def test_determinism():
    a = parse_statement(stmt_of("x = df.head(3)"))
    b = parse_statement(stmt_of("x = df.head(3)"))
    assert a == b


def test_chain_links_two_calls():
    links = chain_links(tree_of("a.f().g()"))
    assert [l.accessor for l in links] == ["f", "g"]
    assert links[0].receiver.label == "a"
    assert links[1].receiver is links[0].node


def test_chain_links_module_receiver():
    links = chain_links(tree_of('pd.read_csv("x")'))
    assert len(links) == 1
    assert links[0].accessor == "read_csv"
    assert links[0].receiver.label == "pd"
    assert links[0].is_call


def test_chain_links_subscript_then_call():
    links = chain_links(tree_of('df[["a","b"]].sort_values("a")'))
    assert [l.accessor for l in links] == ["[]", "sort_values"]
    assert links[0].is_subscript and not links[0].is_call
    assert links[0].receiver.label == "df"
    assert links[1].receiver is links[0].node


def test_chain_links_accessor_path():
    links = chain_links(tree_of('up = df["name"].str.upper()'))
    assert [l.accessor for l in links] == ["[]", "str.upper"]


def test_chain_links_bare_attribute():
    links = chain_links(tree_of("n = df.shape"))
    assert [l.accessor for l in links] == ["shape"]
    assert not links[0].is_call and not links[0].is_subscript


def test_non_chains_return_empty():
    assert chain_links(tree_of("x = 1 + 2")) == []
    assert chain_links(tree_of("x = [df]")) == []
    assert chain_links(tree_of("import os")) == []


@given(st.text(alphabet="abcdef.()[]'\"=, 0123456789", max_size=40))
@settings(max_examples=80, deadline=None)
def test_parse_never_raises(text):
    units = []
    try:
        units = split_statements(text)
    except Exception:
        return  # unclosable text is the stream layer's concern
    for unit in units:
        parse_statement(unit)
