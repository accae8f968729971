/**
 * In-place parameter editing: build the canonical wire payload and submit it.
 *
 * The payload bytes are the contract: fixed key order, no whitespace, so a
 * UI edit and a direct API call with the same inputs are byte-identical.
 * Submitting an unchanged value makes no API call; a rejected edit surfaces
 * inline without losing the typed value.
 */

import type { ViewModel } from "./viewModel.js";

export function buildParamEditPayload(
  nodeId: string,
  paramName: string,
  newValue: string,
): string {
  return JSON.stringify({
    node_id: nodeId,
    param_name: paramName,
    new_value: newValue,
  });
}

export interface EditResult {
  submitted: boolean;
  stale: boolean;
  error: string | null;
  /** What the input field should now display. */
  fieldValue: string;
}

export interface EditTransport {
  postEdit(nodeId: string, payload: string): Promise<{ ok: boolean; status: number; body: any }>;
}

export async function submitParamEdit(
  view: ViewModel,
  transport: EditTransport,
  nodeId: string,
  paramName: string,
  newValue: string,
): Promise<EditResult> {
  const node = view.nodes.get(nodeId);
  const current = node?.params.find((p) => p.name === paramName)?.value;
  if (current === newValue) {
    return { submitted: false, stale: false, error: null, fieldValue: newValue };
  }
  const response = await transport.postEdit(
    nodeId,
    buildParamEditPayload(nodeId, paramName, newValue),
  );
  if (!response.ok) {
    const message =
      (response.body && (response.body.detail ?? response.body.message)) ??
      `edit rejected (${response.status})`;
    return { submitted: true, stale: false, error: String(message), fieldValue: newValue };
  }
  if (node) {
    const param = node.params.find((p) => p.name === paramName);
    if (param) param.value = newValue;
  }
  return {
    submitted: true,
    stale: Boolean(response.body?.stale),
    error: null,
    fieldValue: newValue,
  };
}
