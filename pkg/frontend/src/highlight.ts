/**
 * Code panel highlighting synchronized with node hover.
 *
 * The span comes straight from the node (operation span, or the defining
 * statement for table nodes); hovering does nothing while the panel is
 * hidden, and leaving hover clears the highlight.
 */

import type { Span } from "./types.js";
import type { ViewModel } from "./viewModel.js";

export function highlightSpan(view: ViewModel, nodeId: string | null): Span | null {
  if (!view.codePanelVisible || nodeId === null) return null;
  const node = view.nodes.get(nodeId);
  if (!node || node.spans.length === 0) return null;
  return node.spans[0];
}

/** Line numbers (1-based, inclusive) covered by a span, for line markers. */
export function highlightedLines(span: Span): number[] {
  const lines: number[] = [];
  for (let line = span.start_line; line <= span.end_line; line += 1) {
    lines.push(line);
  }
  return lines;
}
