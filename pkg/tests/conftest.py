import json
import os
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
CORPUS_DIR = TESTS_DIR / "corpus"
DATA_DIR = TESTS_DIR / "data"
FIXTURES_DIR = TESTS_DIR / "fixtures"


def load_manifest():
    with open(CORPUS_DIR / "manifest.json") as handle:
        return json.load(handle)


def corpus_entries(runnable=None, fault=None):
    entries = load_manifest()["scripts"]
    if runnable is not None:
        entries = [e for e in entries if e["runnable"] == runnable]
    if fault is not None:
        entries = [e for e in entries if e.get("fault") == fault]
    return entries


def script_source(name):
    with open(CORPUS_DIR / f"{name}.py") as handle:
        return handle.read()


def expected_graph(name):
    with open(CORPUS_DIR / "expected" / f"{name}.json") as handle:
        return json.load(handle)


def graph_signature(export: dict) -> dict:
    """Project an export to the hand-checkable structure: node kinds, params,
    edge kinds with endpoints as node-list indices."""
    id_to_index = {n["id"]: i for i, n in enumerate(export["nodes"])}
    nodes = []
    for n in export["nodes"]:
        if n["class"] == "table":
            nodes.append({"class": "table", "label": n["label"]})
        elif n["class"] == "operation":
            nodes.append({
                "class": "operation",
                "kind": n["label"],
                "params": [[p["name"], p["value"]] for p in n["params"]],
            })
        else:
            nodes.append({"class": "result", "label": n["label"]})
    edges = [
        [e["kind"], id_to_index[e["from"]], id_to_index[e["to"]]]
        for e in export["edges"]
    ]
    return {"nodes": nodes, "edges": edges}


def copy_data(names, dest):
    os.makedirs(dest, exist_ok=True)
    for name in names:
        with open(DATA_DIR / name, "rb") as src:
            payload = src.read()
        with open(Path(dest) / name, "wb") as out:
            out.write(payload)


@pytest.fixture
def corpus():
    return load_manifest()
