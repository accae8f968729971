export { ApiClient, parseEventStream } from "./api.js";
export { AnimationQueue, FLOW_DURATION_MS } from "./animation.js";
export { buildParamEditPayload, submitParamEdit } from "./editParam.js";
export { glyphMatrix } from "./glyph.js";
export { highlightSpan, highlightedLines } from "./highlight.js";
export { CLASS_COLORS, renderDiagram, renderSvg } from "./render.js";
export { ViewModel } from "./viewModel.js";
export type * from "./types.js";
