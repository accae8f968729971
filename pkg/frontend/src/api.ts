/**
 * Session API client.  All reads and writes go through the documented HTTP
 * surface; the event stream is consumed as `data:` lines with resume-by-seq.
 */

import type { EventEnvelope, GraphJson } from "./types.js";

type FetchLike = (url: string, init?: any) => Promise<{
  ok: boolean;
  status: number;
  text(): Promise<string>;
  json(): Promise<any>;
}>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch as unknown as FetchLike,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(): Promise<string> {
    const res = await this.fetchImpl(this.url("/sessions"), { method: "POST" });
    return (await res.json()).session_id;
  }

  async runTurn(sid: string, body: { message?: string; raw_code?: string }) {
    const res = await this.fetchImpl(this.url(`/sessions/${sid}/turns`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return res.json();
  }

  async fetchGraph(sid: string, snippetId: string): Promise<GraphJson> {
    const res = await this.fetchImpl(
      this.url(`/sessions/${sid}/snippets/${snippetId}/graph`),
    );
    return res.json();
  }

  async fetchEvents(sid: string, after = -1): Promise<EventEnvelope[]> {
    const res = await this.fetchImpl(
      this.url(`/sessions/${sid}/events?after=${after}`),
    );
    return parseEventStream(await res.text());
  }

  async postEdit(sid: string, nodeId: string, payload: string) {
    const res = await this.fetchImpl(
      this.url(`/sessions/${sid}/nodes/${nodeId}/edit`),
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: payload,
      },
    );
    let body: any = null;
    try {
      body = await res.json();
    } catch {
      body = null;
    }
    return { ok: res.ok, status: res.status, body };
  }

  async rerun(sid: string, snippetId: string) {
    const res = await this.fetchImpl(
      this.url(`/sessions/${sid}/snippets/${snippetId}/rerun`),
      { method: "POST" },
    );
    return res.json();
  }

  async fetchMinimap(sid: string) {
    const res = await this.fetchImpl(this.url(`/sessions/${sid}/minimap`));
    return res.json();
  }
}

/** Parse a server-push body into envelopes (one `data: {...}` per event). */
export function parseEventStream(text: string): EventEnvelope[] {
  const envelopes: EventEnvelope[] = [];
  for (const line of text.split("\n")) {
    if (line.startsWith("data: ")) {
      envelopes.push(JSON.parse(line.slice("data: ".length)));
    }
  }
  return envelopes;
}
