/**
 * Browser glue: mounts the diagram, wires scroll/hover/edit interactions to
 * the pure modules, and polls the event stream.  Logic lives in the other
 * modules; this file only touches the DOM.
 */

import { ApiClient } from "./api.js";
import { AnimationQueue } from "./animation.js";
import { submitParamEdit } from "./editParam.js";
import { highlightSpan } from "./highlight.js";
import { renderSvg } from "./render.js";
import { ViewModel } from "./viewModel.js";

export async function mount(root: HTMLElement, baseUrl: string, sid: string,
                            snippetId: string): Promise<ViewModel> {
  const api = new ApiClient(baseUrl);
  const view = new ViewModel(snippetId);
  const queue = new AnimationQueue(() => draw());

  const diagram = document.createElement("div");
  diagram.className = "flowlens-diagram";
  const codePanel = document.createElement("pre");
  codePanel.className = "flowlens-code";
  codePanel.hidden = true; // hidden by default during generation
  root.append(diagram, codePanel);

  function draw(): void {
    diagram.innerHTML = renderSvg(view);
    for (const el of diagram.querySelectorAll<SVGGElement>("g.node")) {
      el.addEventListener("mouseenter", () => {
        const span = highlightSpan(view, el.dataset.id ?? null);
        codePanel.dataset.highlight = span ? JSON.stringify(span) : "";
      });
      el.addEventListener("mouseleave", () => {
        codePanel.dataset.highlight = "";
      });
      el.addEventListener("click", () => view.select(el.dataset.id ?? null));
    }
  }

  let lastSeq = -1;
  async function poll(): Promise<void> {
    const envelopes = await api.fetchEvents(sid, lastSeq);
    for (const envelope of envelopes) {
      lastSeq = Math.max(lastSeq, envelope.seq);
      const before = view.animationQueue.length;
      view.applyEnvelope(envelope);
      for (const activation of view.animationQueue.slice(before)) {
        queue.enqueue(activation);
      }
    }
    draw();
  }

  root.addEventListener("wheel", (event) => {
    const delta = (event as WheelEvent).deltaY > 0 ? 0.05 : -0.05;
    view.setScrollProgress(view.scrollProgress + delta);
    draw();
  });

  (root as any).flowlens = {
    view,
    toggleCode: () => {
      view.toggleCodePanel();
      codePanel.hidden = !view.codePanelVisible;
    },
    editParam: (nodeId: string, name: string, value: string) =>
      submitParamEdit(view, {
        postEdit: (node, payload) => api.postEdit(sid, node, payload),
      }, nodeId, name, value),
    rerun: () => api.rerun(sid, snippetId),
    poll,
  };

  await poll();
  return view;
}
