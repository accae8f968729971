import json

import pytest

from flowlens.cli import main

from conftest import CORPUS_DIR, DATA_DIR, FIXTURES_DIR, copy_data


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_analyze_paper_fixture(capsys):
    code, out, err = run_cli(capsys, "analyze", str(CORPUS_DIR / "s01_select_sort.py"))
    assert code == 0
    graph = json.loads(out)
    ops = [n for n in graph["nodes"] if n["class"] == "operation"]
    chain_ops = [o["label"] for o in ops if o["label"] != "load_data"]
    assert chain_ops == ["select", "sort"]
    tables = [n["label"] for n in graph["nodes"] if n["class"] == "table"]
    assert tables == ["df", "merge_df"]
    assert any(e["kind"] == "assignment" and e["to"] == "tbl:s0:merge_df:0"
               for e in graph["edges"])


def test_analyze_empty_file(tmp_path, capsys):
    empty = tmp_path / "empty.py"
    empty.write_text("")
    code, out, _ = run_cli(capsys, "analyze", str(empty))
    assert code == 0
    graph = json.loads(out)
    assert graph["nodes"] == [] and graph["edges"] == []


def test_analyze_deterministic(capsys):
    _, first, _ = run_cli(capsys, "analyze", str(CORPUS_DIR / "s02_merge_scenario.py"))
    _, second, _ = run_cli(capsys, "analyze", str(CORPUS_DIR / "s02_merge_scenario.py"))
    assert first == second


def test_analyze_unreadable_exits_2(capsys):
    code, _, err = run_cli(capsys, "analyze", "/does/not/exist.py")
    assert code == 2
    assert "cannot read" in err


def test_analyze_dot_format(capsys):
    code, out, _ = run_cli(capsys, "analyze", str(CORPUS_DIR / "s01_select_sort.py"),
                           "--format", "dot")
    assert code == 0
    assert out.startswith("digraph")
    assert 'class="operation"' in out


def test_run_reports_fixture_shape(tmp_path, capsys):
    script = tmp_path / "load.py"
    script.write_text('import pandas as pd\ndf = pd.read_csv("tiny3.csv")\n')
    data = tmp_path / "data"
    copy_data(["tiny3.csv"], data)
    report_path = tmp_path / "report.json"
    code, out, err = run_cli(capsys, "run", str(script),
                             "--data-dir", str(data),
                             "--report", str(report_path))
    assert code == 0, err
    report = json.loads(report_path.read_text())
    assert report["status"] == "ok"
    load = report["snippets"][0]["nodes"][0]
    assert load["kind"] == "load_data"
    assert load["state"] == "active"
    assert load["table_state"]["rows"] == 3
    assert load["table_state"]["cols"] == 2


def test_run_failure_exit_1_and_names_failing_node(tmp_path, capsys):
    script = tmp_path / "bad.py"
    script.write_text("x = 1\n1/0\ny = 2\n")
    report_path = tmp_path / "report.json"
    code, _, _ = run_cli(capsys, "run", str(script), "--report", str(report_path))
    assert code == 1
    report = json.loads(report_path.read_text())
    assert report["status"] == "failed"


def test_run_twice_identical_probe_sections(tmp_path, capsys):
    script = tmp_path / "probe.py"
    script.write_text(
        'import pandas as pd\n'
        'df = pd.read_csv("mid47.csv")\n'
        'top = df.sort_values("x").head(5)\n'
    )
    data = tmp_path / "data"
    copy_data(["mid47.csv"], data)
    reports = []
    for attempt in range(2):
        path = tmp_path / f"report{attempt}.json"
        code, _, _ = run_cli(capsys, "run", str(script),
                             "--data-dir", str(data), "--report", str(path))
        assert code == 0
        report = json.loads(path.read_text())
        reports.append([n["table_state"] for s in report["snippets"]
                        for n in s["nodes"]])
    assert reports[0] == reports[1]
    assert {"rows": 5, "cols": 3, "columns": ["x", "y", "z"]} in reports[0]


def test_run_config_file_overridden_by_flags(tmp_path, capsys):
    script = tmp_path / "load.py"
    script.write_text('import pandas as pd\ndf = pd.read_csv("tiny3.csv")\n')
    data = tmp_path / "data"
    copy_data(["tiny3.csv"], data)
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"timeout": 60.0}))
    report_path = tmp_path / "report.json"
    code, _, err = run_cli(capsys, "run", str(script),
                           "--data-dir", str(data),
                           "--config", str(config),
                           "--report", str(report_path))
    assert code == 0, err
    assert json.loads(report_path.read_text())["status"] == "ok"


def test_help_documents_defaults(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["run", "--help"])
    assert excinfo.value.code == 0
    out = capsys.readouterr().out
    assert "default" in out
    assert "--config" in out


def test_replay_scenario_fixture(capsys):
    code, out, err = run_cli(capsys, "replay",
                             str(FIXTURES_DIR / "scenario_conversation.json"))
    assert code == 0, err
    envelopes = [json.loads(line) for line in out.strip().split("\n")]
    assert envelopes[-1]["type"] == "turn_complete"
    assert envelopes[-1]["payload"]["status"] == "ok"
    activated = [e for e in envelopes if e["type"] == "node_activated"]
    assert activated
    merge_states = [e["payload"]["table_state"] for e in envelopes
                    if e["type"] == "node_activated"
                    and e["payload"]["node"] == "op:s0:4:0"]
    assert merge_states == [{"rows": 6, "cols": 5,
                             "columns": ["id_x", "name", "background",
                                         "id_y", "score"]}]


def test_replay_twice_identical_transcripts(capsys):
    fixture = str(FIXTURES_DIR / "scenario_conversation.json")
    _, first, _ = run_cli(capsys, "replay", fixture)
    _, second, _ = run_cli(capsys, "replay", fixture)
    assert first == second


def test_replay_truncated_fixture_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"turns": [{"user": "hi"}]}')
    code, _, err = run_cli(capsys, "replay", str(bad))
    assert code == 2
    assert "schema" in err


def test_replay_unparseable_fixture_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    code, _, _ = run_cli(capsys, "replay", str(bad))
    assert code == 2
