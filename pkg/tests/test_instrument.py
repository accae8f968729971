import io
import json
from contextlib import redirect_stdout

import pandas as pd
import pytest

from flowlens.extract import OperationKind, TableRegistry, extract_operations
from flowlens.instrument import (
    PROBE_SENTINEL,
    SYNTHETIC_PREFIX,
    Instrumenter,
    plan_probes,
    split_chains,
)
from flowlens.parsing import parse_statement
from flowlens.streaming import split_statements


def prepare(script):
    registry = TableRegistry()
    prepared = []
    for unit in split_statements(script):
        tree = parse_statement(unit).tree
        ops = extract_operations(unit, tree, registry)
        prepared.append((unit, tree, ops))
    return prepared


def instrument(script, snippet_id="s0"):
    inst = Instrumenter(snippet_id)
    for unit, tree, ops in prepare(script):
        inst.add_statement(unit, tree, ops)
    return inst.program


def run_code(code, namespace=None):
    namespace = namespace if namespace is not None else {}
    buffer = io.StringIO()
    with redirect_stdout(buffer):
        exec(code, namespace)
    return namespace, buffer.getvalue()


def split_output(raw):
    user, probes = [], []
    for line in raw.splitlines(keepends=True):
        if line.startswith(PROBE_SENTINEL):
            probes.append(json.loads(line[len(PROBE_SENTINEL):]))
        else:
            user.append(line)
    return "".join(user), probes


def test_split_chain_two_links():
    tree = parse_statement(split_statements('merge_df = df[["a","b"]].sort_values("a")')[0]).tree
    assert split_chains(tree) == [
        '__wg0 = df[["a","b"]]',
        'merge_df = __wg0.sort_values("a")',
    ]


def test_single_link_passthrough():
    tree = parse_statement(split_statements("x = f(1)")[0]).tree
    assert split_chains(tree) == ["x = f(1)"]


def test_opaque_statement_passthrough():
    tree = parse_statement(split_statements("for c in df.columns:\n    print(c)")[0]).tree
    assert split_chains(tree) == ["for c in df.columns:\n    print(c)"]


def test_four_link_chain_split_equals_original():
    source = 'out = df.query("a > 1").sort_values("a").head(2).tail(1)'
    tree = parse_statement(split_statements(source)[0]).tree
    parts = split_chains(tree)
    assert len(parts) == 4

    frame = pd.DataFrame({"a": [3, 1, 2, 5], "b": list("wxyz")})
    ns1, _ = run_code(source, {"df": frame.copy()})
    ns2, _ = run_code("\n".join(parts), {"df": frame.copy()})
    pd.testing.assert_frame_equal(ns1["out"], ns2["out"])


def test_synthetic_names_avoid_user_collisions():
    source = (
        '__wg0 = 7\n'
        'df = pd.read_csv("x.csv")\n'
        'merge_df = df[["a"]].sort_values("a")\n'
    )
    program = instrument(source)
    assert program.split_map
    assert "__wg0" not in program.split_map
    assert all(name.startswith(SYNTHETIC_PREFIX) for name in program.split_map)


def test_probe_emits_shape_record():
    program = instrument('df = pd.read_csv("x.csv")\n')
    probes = [u for u in program.units if u.kind == "probe"]
    assert len(probes) == 1
    ns = {"pd": pd, "df": pd.DataFrame({"a": [1, 2, 3], "b": [4, 5, 6]})}
    _, raw = run_code(probes[0].code, ns)
    _, records = split_output(raw)
    assert records == [{
        "probe": "p:s0:0:0",
        "var": "df",
        "rows": 3,
        "cols": 2,
        "columns": ["a", "b"],
    }]
    assert program.bindings["p:s0:0:0"] == "op:s0:0:0"


def test_probe_reports_series_as_one_column():
    program = instrument(
        'df = pd.read_csv("x.csv")\n'
        's = df["a"]\n'
    )
    probe = [u for u in program.units if u.kind == "probe"][-1]
    ns = {"s": pd.Series([1, 2], name="a")}
    _, raw = run_code(probe.code, ns)
    _, records = split_output(raw)
    assert records[0]["cols"] == 1
    assert records[0]["columns"] == ["a"]
    assert records[0]["rows"] == 2


def test_probe_silent_for_non_table():
    program = instrument(
        'df = pd.read_csv("x.csv")\n'
        'g = df.groupby("a")\n'
    )
    probe = [u for u in program.units if u.kind == "probe"][-1]
    frame = pd.DataFrame({"a": [1, 1, 2], "b": [1, 2, 3]})
    _, raw = run_code(probe.code, {"g": frame.groupby("a")})
    assert raw == ""


def test_statement_without_table_output_has_no_probe():
    program = instrument("x = 1\nprint('hi')\n")
    assert [u.kind for u in program.units] == ["user", "user"]


def test_visualize_gets_figure_probe():
    program = instrument(
        'df = pd.read_csv("x.csv")\n'
        'df.plot(kind="bar")\n'
    )
    probes = [u for u in program.units if u.kind == "probe"]
    assert len(probes) == 2  # load probe + figure probe
    assert "savefig" in probes[1].code
    assert program.bindings["p:s0:1:0"] == "op:s0:1:0"


def test_unassigned_inspect_rewritten_for_capture():
    program = instrument(
        'df = pd.read_csv("x.csv")\n'
        'df.head()\n'
    )
    users = [u for u in program.units if u.kind == "user"]
    assert users[1].code.startswith(f"{SYNTHETIC_PREFIX}")
    assert users[1].code.endswith("= df.head()")


def test_print_statement_not_rewritten():
    program = instrument(
        'df = pd.read_csv("x.csv")\n'
        'print(df)\n'
    )
    users = [u for u in program.units if u.kind == "user"]
    assert users[1].code == "print(df)"


def test_add_column_chain_units_align_with_ops():
    script = (
        'df = pd.read_csv("x.csv")\n'
        'df["price_eur"] = df["price"].apply(lambda p: p * 0.92)\n'
    )
    prepared = prepare(script)
    inst = Instrumenter("s0")
    for unit, tree, ops in prepared:
        inst.add_statement(unit, tree, ops)
    users = [u for u in inst.program.units if u.kind == "user" and u.statement_index == 1]
    assert len(users) == 3
    assert users[0].code == '__wg0 = df["price"]'
    assert users[1].code == "__wg1 = __wg0.apply(lambda p: p * 0.92)"
    assert users[2].code == 'df["price_eur"] = __wg1'
    assert [u.op_ids for u in users] == [("s0:1:0",), ("s0:1:1",), ("s0:1:2",)]


def test_probe_totality_on_table_yielding_ops():
    script = (
        'df = pd.read_csv("x.csv")\n'
        'clean = df.dropna().drop_duplicates()\n'
        'df["n"] = df["a"] * 2\n'
    )
    prepared = prepare(script)
    inst = Instrumenter("s0")
    all_ops = []
    for unit, tree, ops in prepared:
        inst.add_statement(unit, tree, ops)
        all_ops.extend(ops)
    bound_ops = {pid.split(":", 1)[1] for pid in inst.program.bindings}
    for op in all_ops:
        if op.output_table:
            assert op.id in bound_ops


def test_semantic_equivalence_in_process():
    script = (
        "import pandas as pd\n"
        "df = pd.DataFrame({'a': [3, 1, None, 2], 'b': [1, 2, 3, 4]})\n"
        "clean = df.dropna().sort_values('a')\n"
        "clean['double'] = clean['a'].apply(lambda v: v * 2)\n"
        "print(len(clean))\n"
    )
    program = instrument(script)
    ns_orig, out_orig = run_code(script)
    instrumented = "\n".join(u.code for u in program.units)
    ns_inst, out_raw = run_code(instrumented)
    out_user, _ = split_output(out_raw)
    assert out_user == out_orig
    for name in ("df", "clean"):
        pd.testing.assert_frame_equal(ns_orig[name], ns_inst[name])
    # probes never create user-visible names
    extra = {k for k in ns_inst if not k.startswith(("__", "_"))} - set(ns_orig)
    assert extra == set()


def test_parenthesized_multiline_chain_splits_valid():
    script = (
        "import pandas as pd\n"
        "df = pd.DataFrame({'a': [3, 1, None, 2]})\n"
        "x = (df\n"
        "     .dropna()\n"
        "     .head(2))\n"
    )
    registry = TableRegistry()
    inst = Instrumenter("s0")
    for unit in split_statements(script):
        tree = parse_statement(unit).tree
        ops = extract_operations(unit, tree, registry)
        inst.add_statement(unit, tree, ops)
    users = [u for u in inst.program.units if u.kind == "user"]
    assert len(users) == 4  # import, frame, two split links
    ns_orig, _ = run_code(script)
    ns_inst, _ = run_code("\n".join(u.code for u in inst.program.units))
    pd.testing.assert_frame_equal(ns_orig["x"], ns_inst["x"])


def test_templates_are_versioned_and_carry_sentinel():
    from flowlens.instrument import figure_probe_code, table_probe_code

    table = table_probe_code("p:x", "df")
    assert "probe v1" in table
    assert PROBE_SENTINEL in table
    figure = figure_probe_code()
    assert "probe v1" in figure
    assert PROBE_SENTINEL not in figure  # figures travel via the response field


def test_plan_probes_spec_shape():
    prepared = prepare(
        'df = pd.read_csv("x.csv")\n'
        'merge_df = df[["a","b"]].sort_values("a")\n'
    )
    unit, tree, ops = prepared[1]
    splits = split_chains(tree, unit)
    program = plan_probes(ops, splits, "s0")
    kinds = [u.kind for u in program.units]
    assert kinds == ["user", "probe", "user", "probe"]
    assert set(program.bindings) == {"p:s0:1:0", "p:s0:1:1"}
    # the synthetic name maps back to the splitting boundary: the link's span
    assert program.split_map["__wg0"] == ops[0].span
