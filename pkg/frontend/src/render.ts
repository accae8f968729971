/**
 * Render model: ranks to pixels, classes to colors, states to glyphs.
 *
 * Table nodes render yellow, operation nodes pink, result nodes white;
 * a chain's operations run top to bottom and sibling chains sit left to
 * right in execution order (the rank grid comes from the API as-is).
 * Cross-snippet lineage is drawn as a curve, every other edge as a line.
 */

import { glyphMatrix, GlyphSpec } from "./glyph.js";
import type { GraphEdge, GraphNode } from "./types.js";
import type { ViewModel } from "./viewModel.js";

export const CLASS_COLORS = {
  table: "#f2c94c", // yellow
  operation: "#f29ccb", // pink
  result: "#ffffff", // white
} as const;

export const CELL_W = 170;
export const CELL_H = 92;
export const NODE_W = 132;
export const NODE_H = 46;

export interface RenderedNode {
  id: string;
  nodeClass: GraphNode["class"];
  label: string;
  color: string;
  state: GraphNode["state"];
  x: number;
  y: number;
  width: number;
  height: number;
  glyph: GlyphSpec | null;
  params: { name: string; value: string }[];
  revealed: boolean;
}

export interface RenderedEdge {
  id: string;
  kind: GraphEdge["kind"];
  from: string;
  to: string;
  curved: boolean;
}

export interface RenderTree {
  nodes: RenderedNode[];
  edges: RenderedEdge[];
  width: number;
  height: number;
}

/**
 * Project the view model to drawable geometry.  With scrollytelling active,
 * activation state is only shown for the first floor(p*K) activations; the
 * static structure always renders.
 */
export function renderDiagram(view: ViewModel): RenderTree {
  const revealedNodes = new Set(
    view.visibleActivations(view.scrollProgress).map((a) => a.node),
  );
  const nodes: RenderedNode[] = [];
  let maxX = 0;
  let maxY = 0;
  for (const id of view.order) {
    const node = view.nodes.get(id)!;
    const [row, col] = node.rank;
    const x = col * CELL_W;
    const y = (row + 1) * CELL_H;
    const revealed = view.scrollProgress >= 1 || revealedNodes.has(id);
    const state = node.class === "operation" && !revealed ? "pending" : node.state;
    nodes.push({
      id,
      nodeClass: node.class,
      label: node.label,
      color: CLASS_COLORS[node.class],
      state,
      x,
      y,
      width: NODE_W,
      height: NODE_H,
      glyph: revealed && node.table_state ? glyphMatrix(node.table_state) : null,
      params: node.params.map((p) => ({ name: p.name, value: p.value })),
      revealed,
    });
    maxX = Math.max(maxX, x + NODE_W);
    maxY = Math.max(maxY, y + NODE_H);
  }
  const edges: RenderedEdge[] = view.edges.map((edge) => ({
    id: edge.id,
    kind: edge.kind,
    from: edge.from,
    to: edge.to,
    curved: edge.kind === "cross_snippet_lineage",
  }));
  return { nodes, edges, width: maxX + CELL_W, height: maxY + CELL_H };
}

/** Serialize the render tree as standalone SVG (testable without a DOM). */
export function renderSvg(view: ViewModel): string {
  const tree = renderDiagram(view);
  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${tree.width}" height="${tree.height}">`,
  ];
  const byId = new Map(tree.nodes.map((n) => [n.id, n]));
  for (const edge of tree.edges) {
    const a = byId.get(edge.from);
    const b = byId.get(edge.to);
    if (!a || !b) continue;
    const x1 = a.x + a.width / 2;
    const y1 = a.y + a.height;
    const x2 = b.x + b.width / 2;
    const y2 = b.y;
    if (edge.curved) {
      const cx = (x1 + x2) / 2 + 60;
      parts.push(
        `<path class="edge ${edge.kind}" d="M${x1},${y1} Q${cx},${(y1 + y2) / 2} ${x2},${y2}" fill="none"/>`,
      );
    } else {
      parts.push(
        `<line class="edge ${edge.kind}" x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}"/>`,
      );
    }
  }
  for (const node of tree.nodes) {
    const state = node.state ? ` data-state="${node.state}"` : "";
    parts.push(
      `<g class="node ${node.nodeClass}" data-id="${node.id}"${state}>` +
        `<rect x="${node.x}" y="${node.y}" width="${node.width}" height="${node.height}" fill="${node.color}"/>` +
        `<text x="${node.x + 8}" y="${node.y + 20}">${escapeXml(node.label)}</text>` +
        renderGlyph(node) +
        `</g>`,
    );
  }
  parts.push("</svg>");
  return parts.join("\n");
}

function renderGlyph(node: RenderedNode): string {
  if (!node.glyph) return "";
  const cells: string[] = [];
  for (let c = 0; c < node.glyph.cols; c += 1) {
    cells.push(
      `<rect class="glyph-col" x="${node.x + c * (node.glyph.cellSize + 1)}" ` +
        `y="${node.y + node.height + 4}" width="${node.glyph.cellSize}" ` +
        `height="${node.glyph.rowExtent}"/>`,
    );
  }
  return `<g class="glyph" data-cols="${node.glyph.cols}" data-rows="${node.glyph.rows}">${cells.join("")}</g>`;
}

function escapeXml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}
