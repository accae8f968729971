/**
 * Client-side view of one snippet's diagram, built from the event stream.
 *
 * Graph deltas apply strictly in per-snippet seq order; activation events are
 * also pushed onto the animation queue so playback matches execution order.
 * Scroll progress p in [0,1] reveals exactly the first floor(p * K) of K
 * activations.
 */

import type { EventEnvelope, GraphEdge, GraphJson, GraphNode } from "./types.js";

const DELTA_TYPES = new Set([
  "node_added",
  "edge_added",
  "node_activated",
  "node_failed",
  "glyph_flow",
]);

export interface Activation {
  kind: "node_activated" | "node_failed" | "glyph_flow";
  node?: string;
  from?: string | null;
  to?: string;
  state?: unknown;
  message?: string;
}

export class ViewModel {
  snippetId: string;
  nodes = new Map<string, GraphNode>();
  order: string[] = [];
  edges: GraphEdge[] = [];
  /** Activations in execution order (the scrollytelling timeline). */
  activations: Activation[] = [];
  animationQueue: Activation[] = [];
  scrollProgress = 1;
  selectedNode: string | null = null;
  codePanelVisible = false; // hidden by default during generation
  revision = 0;
  private lastDeltaSeq = -1;

  constructor(snippetId: string) {
    this.snippetId = snippetId;
  }

  /** Apply one server envelope; envelopes for other snippets are ignored. */
  applyEnvelope(envelope: EventEnvelope): void {
    if (!DELTA_TYPES.has(envelope.type)) return;
    const payload = envelope.payload as Record<string, any>;
    if (payload.snippet_id !== this.snippetId) return;
    if ((payload.revision ?? 0) !== this.revision) {
      // a re-run starts a fresh pass: reset and follow the new stream
      this.reset(payload.revision ?? 0);
    }
    const seq = payload.seq as number;
    if (seq !== this.lastDeltaSeq + 1) {
      throw new Error(
        `delta gap for ${this.snippetId}: got seq ${seq} after ${this.lastDeltaSeq}`,
      );
    }
    this.lastDeltaSeq = seq;
    switch (envelope.type) {
      case "node_added": {
        const node = payload.node as GraphNode;
        this.nodes.set(node.id, structuredClone(node));
        this.order.push(node.id);
        break;
      }
      case "edge_added": {
        this.edges.push(payload.edge as GraphEdge);
        break;
      }
      case "node_activated": {
        const node = this.nodes.get(payload.node as string);
        if (node) {
          node.state = "active";
          if (payload.table_state) node.table_state = payload.table_state;
        }
        this.pushActivation({
          kind: "node_activated",
          node: payload.node as string,
          state: payload.table_state,
        });
        break;
      }
      case "node_failed": {
        const node = this.nodes.get(payload.node as string);
        if (node) node.state = "failed";
        this.pushActivation({
          kind: "node_failed",
          node: payload.node as string,
          message: payload.message as string,
        });
        break;
      }
      case "glyph_flow": {
        this.pushActivation({
          kind: "glyph_flow",
          from: (payload.from as string | null) ?? null,
          to: payload.to as string,
          state: payload.state,
        });
        break;
      }
    }
  }

  private pushActivation(activation: Activation): void {
    this.activations.push(activation);
    this.animationQueue.push(activation);
  }

  private reset(revision: number): void {
    this.nodes.clear();
    this.order = [];
    this.edges = [];
    this.activations = [];
    this.animationQueue = [];
    this.revision = revision;
    this.lastDeltaSeq = -1;
  }

  /** Load a complete graph-json snapshot (initial fetch or refresh). */
  loadSnapshot(graph: GraphJson): void {
    this.reset(this.revision);
    for (const node of graph.nodes) {
      this.nodes.set(node.id, structuredClone(node));
      this.order.push(node.id);
    }
    this.edges = graph.edges.slice();
    this.lastDeltaSeq = graph.meta.seq - 1;
  }

  /** Count of node activations in the timeline (K for scrollytelling). */
  activationCount(): number {
    return this.activations.filter((a) => a.kind !== "glyph_flow").length;
  }

  /** Activations revealed at scroll progress p: exactly floor(p * K). */
  visibleActivations(progress: number): Activation[] {
    const clamped = Math.min(1, Math.max(0, progress));
    const nodeEvents = this.activations.filter((a) => a.kind !== "glyph_flow");
    const count = Math.floor(clamped * nodeEvents.length);
    return nodeEvents.slice(0, count);
  }

  setScrollProgress(progress: number): void {
    this.scrollProgress = Math.min(1, Math.max(0, progress));
  }

  toggleCodePanel(): void {
    this.codePanelVisible = !this.codePanelVisible;
  }

  select(nodeId: string | null): void {
    this.selectedNode = nodeId;
  }

  /** Node/edge identity sets, for consistency checks against exports. */
  contentSets(): { nodes: string[]; edges: string[] } {
    return {
      nodes: this.order.slice().sort(),
      edges: this.edges.map((e) => `${e.kind}:${e.from}->${e.to}`).sort(),
    };
  }
}
