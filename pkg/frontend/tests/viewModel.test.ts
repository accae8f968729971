import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { ViewModel } from "../src/viewModel.js";
import type { EventEnvelope, GraphJson } from "../src/types.js";

const graph: GraphJson = JSON.parse(
  readFileSync(new URL("./fixtures/golden_graph.json", import.meta.url), "utf8"),
);
const events: EventEnvelope[] = JSON.parse(
  readFileSync(new URL("./fixtures/golden_events.json", import.meta.url), "utf8"),
);

function delta(type: string, payload: Record<string, unknown>, seq = 0): EventEnvelope {
  return { seq, type, payload: { snippet_id: "s0", revision: 0, ...payload } };
}

describe("ViewModel", () => {
  it("ignores envelopes for other snippets and non-delta types", () => {
    const view = new ViewModel("s0");
    view.applyEnvelope({ seq: 0, type: "text", payload: { text: "hi" } });
    view.applyEnvelope(delta("node_added", {
      snippet_id: "s9",
      seq: 0,
      node: { id: "x", class: "table", label: "t", state: null, params: [], spans: [], table_state: null, rank: [0, 0] },
    }));
    expect(view.order).toEqual([]);
  });

  it("applies deltas in seq order and rejects gaps", () => {
    const view = new ViewModel("s0");
    view.applyEnvelope(delta("node_added", {
      seq: 0,
      node: { id: "a", class: "table", label: "t", state: null, params: [], spans: [], table_state: null, rank: [0, 0] },
    }));
    expect(() =>
      view.applyEnvelope(delta("node_added", {
        seq: 5,
        node: { id: "b", class: "table", label: "u", state: null, params: [], spans: [], table_state: null, rank: [0, 0] },
      })),
    ).toThrow(/gap/);
  });

  it("a new revision resets the pass (re-run semantics)", () => {
    const view = new ViewModel("s0");
    for (const envelope of events) view.applyEnvelope(envelope);
    const before = view.order.length;
    expect(before).toBeGreaterThan(0);
    view.applyEnvelope(delta("node_added", {
      revision: 1,
      seq: 0,
      node: { id: "fresh", class: "table", label: "df", state: null, params: [], spans: [], table_state: null, rank: [0, 0] },
    }));
    expect(view.order).toEqual(["fresh"]);
    expect(view.revision).toBe(1);
  });

  it("activation marks nodes active and updates table state", () => {
    const view = new ViewModel("s0");
    for (const envelope of events) view.applyEnvelope(envelope);
    const merge = view.nodes.get("op:s0:4:0")!;
    expect(merge.state).toBe("active");
    expect(merge.table_state).toEqual({
      rows: 6,
      cols: 5,
      columns: ["id_x", "name", "background", "id_y", "score"],
    });
  });

  it("loadSnapshot matches the event-built content", () => {
    const fromEvents = new ViewModel("s0");
    for (const envelope of events) fromEvents.applyEnvelope(envelope);
    const fromSnapshot = new ViewModel("s0");
    fromSnapshot.loadSnapshot(graph);
    expect(fromSnapshot.contentSets()).toEqual(fromEvents.contentSets());
  });

  it("scroll progress clamps to [0, 1]", () => {
    const view = new ViewModel("s0");
    view.setScrollProgress(2);
    expect(view.scrollProgress).toBe(1);
    view.setScrollProgress(-1);
    expect(view.scrollProgress).toBe(0);
  });

  it("code panel starts hidden and toggles", () => {
    const view = new ViewModel("s0");
    expect(view.codePanelVisible).toBe(false);
    view.toggleCodePanel();
    expect(view.codePanelVisible).toBe(true);
  });
});
