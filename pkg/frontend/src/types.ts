/**
 * Wire types mirrored from the session API.
 *
 * The UI holds no business logic: classification, layout ranks, spans, and
 * states all arrive through these shapes; the frontend only maps them to
 * pixels and interactions.
 */

export interface Span {
  start_line: number;
  start_col: number;
  end_line: number;
  end_col: number;
}

export interface TableState {
  rows: number;
  cols: number;
  columns: string[];
}

export interface NodeParam {
  name: string;
  value: string;
  span: Span;
}

export type NodeClass = "table" | "operation" | "result";
export type NodeRunState = "pending" | "active" | "failed" | null;

export interface GraphNode {
  id: string;
  class: NodeClass;
  label: string;
  state: NodeRunState;
  params: NodeParam[];
  spans: Span[];
  table_state: TableState | null;
  rank: [number, number];
  output_table?: string | null;
  produces_result?: string;
  failure?: string | null;
  prior_occurrence?: string | null;
  payload_ref?: string;
}

export interface GraphEdge {
  id: string;
  kind:
    | "input"
    | "assignment"
    | "result_generation"
    | "operation_chain"
    | "cross_snippet_lineage";
  from: string;
  to: string;
}

export interface GraphJson {
  nodes: GraphNode[];
  edges: GraphEdge[];
  meta: { snippet_id: string; seq: number };
}

export interface EventEnvelope {
  seq: number;
  type: string;
  payload: Record<string, unknown>;
}
