import json

import pytest

from flowlens.errors import StateTransitionError, UnknownFormatError, UnknownNodeError
from flowlens.extract import TableRegistry, extract_operations
from flowlens.graph import (
    BindOutcome,
    Diagram,
    EdgeKind,
    NodeState,
    TableState,
)
from flowlens.parsing import parse_statement
from flowlens.spans import LineIndex
from flowlens.streaming import split_statements

PAPER_SNIPPET = (
    'df = pd.read_csv("records.csv")\n'
    'merge_df = df[["attr_1", "attr_2"]].sort()\n'
)


def build(script, snippet_id="s0", registry=None, diagram=None):
    registry = registry if registry is not None else TableRegistry()
    diagram = diagram or Diagram(snippet_id)
    for unit in split_statements(script, snippet_id):
        tree = parse_statement(unit).tree
        ops = extract_operations(unit, tree, registry)
        if ops:
            diagram.apply_operations(ops, registry)
    return diagram, registry


def labels(diagram):
    return [(n["class"], n["label"]) for n in diagram._export_dict()["nodes"]]


def edge_kinds(diagram):
    return [(e["kind"]) for e in diagram._export_dict()["edges"]]


def test_paper_chain_builds_expected_nodes_and_edges():
    diagram, _ = build(PAPER_SNIPPET)
    assert labels(diagram) == [
        ("operation", "load_data"),
        ("table", "df"),
        ("operation", "select"),
        ("operation", "sort"),
        ("table", "merge_df"),
    ]
    kinds = edge_kinds(diagram)
    assert kinds == ["assignment", "input", "operation_chain", "assignment"]


def test_empty_ops_yield_no_deltas():
    diagram = Diagram("s0")
    assert diagram.apply_operations([], TableRegistry()) == []


def test_deltas_nodes_precede_edges():
    diagram, _ = build(PAPER_SNIPPET)
    seen = set()
    for delta in diagram.deltas:
        if delta.event == "node_added":
            seen.add(delta.payload["node"]["id"])
        elif delta.event == "edge_added":
            edge = delta.payload["edge"]
            assert edge["from"] in seen or edge["kind"] == "cross_snippet_lineage"
            assert edge["to"] in seen
    seqs = [d.seq for d in diagram.deltas]
    assert seqs == list(range(len(seqs)))


def test_cross_snippet_lineage_copy():
    registry = TableRegistry()
    first, _ = build('df = pd.read_csv("a.csv")\n', "s0", registry)
    second, _ = build('top = df.head(3)\n', "s1", registry)
    export = second._export_dict()
    df_nodes = [n for n in export["nodes"] if n["label"] == "df"]
    assert len(df_nodes) == 1
    assert df_nodes[0]["prior_occurrence"] == "tbl:s0:df:0"
    lineage = [e for e in export["edges"] if e["kind"] == "cross_snippet_lineage"]
    assert len(lineage) == 1
    assert lineage[0]["from"] == "tbl:s0:df:0"
    assert lineage[0]["to"] == df_nodes[0]["id"]


def test_rebinding_creates_new_generation():
    diagram, _ = build(
        'df = pd.read_csv("a.csv")\n'
        'df = df.dropna()\n'
    )
    table_ids = [n["id"] for n in diagram._export_dict()["nodes"] if n["class"] == "table"]
    assert table_ids == ["tbl:s0:df:0", "tbl:s0:df:1"]


def test_bind_activates_with_state_and_glyph():
    diagram, _ = build(PAPER_SNIPPET)
    ops = diagram.operation_nodes()
    state = TableState(120, 2, ("attr_1", "attr_2"))
    deltas = diagram.bind_runtime_state(ops[0].id, BindOutcome(ok=True, output_state=state))
    events = [d.event for d in deltas]
    assert events == ["node_activated", "glyph_flow"]
    assert deltas[0].payload["table_state"] == {
        "rows": 120, "cols": 2, "columns": ["attr_1", "attr_2"],
    }
    assert diagram.nodes[ops[0].id].state is NodeState.ACTIVE
    # output table node picked up the state
    df_node = diagram.nodes[diagram.local_tables["df"]]
    assert df_node.table_state == state


def test_bind_failure_emits_node_failed_without_glyph():
    diagram, _ = build(PAPER_SNIPPET)
    ops = diagram.operation_nodes()
    deltas = diagram.bind_runtime_state(ops[1].id, BindOutcome(ok=False, message="KeyError"))
    assert [d.event for d in deltas] == ["node_failed"]
    assert diagram.nodes[ops[1].id].state is NodeState.FAILED


def test_bind_twice_is_a_state_error():
    diagram, _ = build(PAPER_SNIPPET)
    op = diagram.operation_nodes()[0]
    diagram.bind_runtime_state(op.id, BindOutcome(ok=True))
    with pytest.raises(StateTransitionError):
        diagram.bind_runtime_state(op.id, BindOutcome(ok=True))


def test_glyph_state_consistency():
    diagram, _ = build(PAPER_SNIPPET)
    op = diagram.operation_nodes()[0]
    state = TableState(6, 3, ("attr_1", "attr_2", "attr_3"))
    deltas = diagram.bind_runtime_state(op.id, BindOutcome(ok=True, output_state=state))
    glyph = [d for d in deltas if d.event == "glyph_flow"][0]
    st = glyph.payload["state"]
    assert st["cols"] == len(st["columns"])


def test_node_code_span_for_sort_and_table():
    snippet = PAPER_SNIPPET
    diagram, _ = build(snippet)
    index = LineIndex(snippet)
    sort_node = diagram.operation_nodes()[2]
    assert index.slice(diagram.node_code_span(sort_node.id)) == ".sort()"
    df_span = diagram.node_code_span("tbl:s0:df:0")
    assert index.slice(df_span) == 'pd.read_csv("records.csv")'
    with pytest.raises(UnknownNodeError):
        diagram.node_code_span("nope")


def test_export_empty_diagram_shell():
    diagram = Diagram("s0")
    data = json.loads(diagram.export("graph-json"))
    assert data["nodes"] == []
    assert data["edges"] == []
    assert data["meta"] == {"snippet_id": "s0", "seq": 0}


def test_export_deterministic_and_pure():
    d1, _ = build(PAPER_SNIPPET)
    d2, _ = build(PAPER_SNIPPET)
    assert d1.export("graph-json") == d2.export("graph-json")
    assert d1.export("graph-json") == d1.export("graph-json")
    assert d1.export("dot") == d2.export("dot")


def test_export_unknown_format():
    with pytest.raises(UnknownFormatError):
        Diagram("s0").export("png")


def test_dot_export_carries_classes():
    diagram, _ = build(PAPER_SNIPPET)
    dot = diagram.export("dot")
    assert 'class="table"' in dot
    assert 'class="operation"' in dot
    assert '"op:s0:1:0" -> "op:s0:1:1" [kind="operation_chain"];' in dot


def test_streaming_batch_equivalence():
    registry_a = TableRegistry()
    diagram_a = Diagram("s0")
    for unit in split_statements(PAPER_SNIPPET, "s0"):
        tree = parse_statement(unit).tree
        ops = extract_operations(unit, tree, registry_a)
        diagram_a.apply_operations(ops, registry_a)

    registry_b = TableRegistry()
    diagram_b = Diagram("s0")
    all_ops = []
    for unit in split_statements(PAPER_SNIPPET, "s0"):
        tree = parse_statement(unit).tree
        all_ops.extend(extract_operations(unit, tree, registry_b))
    diagram_b.apply_operations(all_ops, registry_b)

    assert diagram_a.export("graph-json") == diagram_b.export("graph-json")


def test_edge_typing_constraints():
    diagram, _ = build(
        'a = pd.read_csv("a.csv")\n'
        'b = pd.read_csv("b.csv")\n'
        'm = a.merge(b, on="id")\n'
        'm.plot(kind="bar")\n'
    )
    for op_node in diagram.operation_nodes():
        diagram.bind_runtime_state(
            op_node.id,
            BindOutcome(ok=True, output_state=TableState(1, 1, ("x",)),
                        figure_paths=("figures/fig_1.png",)),
        )
    classes = {n["id"]: n["class"] for n in diagram._export_dict()["nodes"]}
    for edge in diagram.edges:
        kind = edge.kind
        src, dst = classes.get(edge.src), classes.get(edge.dst)
        if kind is EdgeKind.INPUT:
            assert (src, dst) == ("table", "operation")
        elif kind is EdgeKind.ASSIGNMENT:
            assert (src, dst) == ("operation", "table")
        elif kind is EdgeKind.RESULT_GENERATION:
            assert (src, dst) == ("operation", "result")
        elif kind is EdgeKind.OPERATION_CHAIN:
            assert (src, dst) == ("operation", "operation")


def test_acyclic_within_snippet():
    diagram, _ = build(
        'df = pd.read_csv("x.csv")\n'
        'out = df.query("a > 1").sort_values("a").head(2)\n'
    )
    order = {node_id: i for i, node_id in enumerate(diagram.node_order)}
    for edge in diagram.edges:
        if edge.kind is EdgeKind.CROSS_SNIPPET_LINEAGE:
            continue
        assert order[edge.src] < order[edge.dst]


def test_dangling_input_records_diagnostic():
    from flowlens.extract import Operation, OperationKind, ResultKind
    from flowlens.spans import Span

    registry = TableRegistry()
    diagram = Diagram("s0")
    op = Operation(
        id="s0:0:0", kind=OperationKind.SORT, params=(),
        input_tables=("ghost",), output_table=None,
        produces_result=ResultKind.NONE, span=Span(1, 0, 1, 5),
        statement_index=0, link_inputs=("ghost",),
    )
    diagram.apply_operations([op], registry)
    assert diagram.diagnostics
    assert any(n for n in diagram.nodes.values() if getattr(n, "dangling", False))


def test_diagram_round_trip_serialization():
    diagram, _ = build(PAPER_SNIPPET)
    diagram.bind_runtime_state(
        diagram.operation_nodes()[0].id,
        BindOutcome(ok=True, output_state=TableState(6, 3, ("a", "b", "c"))),
    )
    clone = Diagram.from_dict(diagram.to_dict())
    assert clone.export("graph-json") == diagram.export("graph-json")
    assert [d.as_dict() for d in clone.deltas] == [d.as_dict() for d in diagram.deltas]


def test_text_result_node_created_on_activation():
    diagram, _ = build(
        'df = pd.read_csv("x.csv")\n'
        'print(df)\n'
    )
    inspect_node = diagram.operation_nodes()[1]
    deltas = diagram.bind_runtime_state(
        inspect_node.id, BindOutcome(ok=True, result_text="   a  b\n0  1  2")
    )
    events = [d.event for d in deltas]
    assert events == ["node_activated", "node_added", "edge_added", "glyph_flow"]
    export = diagram._export_dict()
    results = [n for n in export["nodes"] if n["class"] == "result"]
    assert len(results) == 1
    assert results[0]["label"] == "text"
    static = json.loads(diagram.export("graph-json", runtime=False))
    assert all(n["class"] != "result" for n in static["nodes"])
    assert all(n["state"] in (None, "pending") for n in static["nodes"])
