/**
 * Table glyphs: a 2D matrix whose column count equals the table's column
 * count and whose row extent is proportional to the row count (log-damped so
 * thousand-row tables still fit while size differences stay visible).
 */

import type { TableState } from "./types.js";

export interface GlyphSpec {
  cols: number;
  rows: number;
  cellSize: number;
  rowExtent: number;
}

export const GLYPH_CELL = 8;
export const ROW_UNIT = 6;
export const MAX_EXTENT = 60;

export function glyphMatrix(state: TableState): GlyphSpec {
  const extent = Math.min(
    MAX_EXTENT,
    Math.max(ROW_UNIT, Math.round(ROW_UNIT * Math.log2(1 + state.rows))),
  );
  return {
    cols: state.cols,
    rows: state.rows,
    cellSize: GLYPH_CELL,
    rowExtent: extent,
  };
}
