// Thin typed client over the review service's HTTP contract.

import type {
  DecisionAction,
  FinalizeResult,
  ProposalPage,
  ProposalView,
  StatsPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

// Wrapping keeps the browser's fetch bound to its realm; passing the bare
// function around would throw "Illegal invocation" there.
const defaultFetch: FetchLike = (url, init) => globalThis.fetch(url, init);

export class ReviewApi {
  constructor(
    readonly base: string,
    private readonly token = "",
    private readonly fetchFn: FetchLike = defaultFetch,
  ) {}

  private headers(json: boolean): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["Content-Type"] = "application/json";
    if (this.token) h["X-Review-Token"] = this.token;
    return h;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.base}${path}`, init);
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      body = null;
    }
    if (!resp.ok) {
      const detail =
        body && typeof body === "object" && "error" in body
          ? String((body as { error: unknown }).error)
          : resp.statusText;
      throw new ApiError(resp.status, detail);
    }
    return body as T;
  }

  listPending(limit = 50, offset = 0): Promise<ProposalPage> {
    const q = `status=pending&limit=${limit}&offset=${offset}`;
    return this.request(`/proposals?${q}`, { headers: this.headers(false) });
  }

  get(id: string): Promise<ProposalView> {
    return this.request(`/proposals/${id}`, { headers: this.headers(false) });
  }

  decide(
    id: string,
    action: DecisionAction,
    texts?: string[],
    note?: string,
  ): Promise<ProposalView> {
    const payload: Record<string, unknown> = { action };
    if (texts !== undefined) payload.texts = texts;
    if (note !== undefined) payload.note = note;
    return this.request(`/proposals/${id}/decision`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify(payload),
    });
  }

  finalize(path?: string): Promise<FinalizeResult> {
    const payload = path === undefined ? {} : { path };
    return this.request("/datasets/finalize", {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify(payload),
    });
  }

  stats(): Promise<StatsPayload> {
    return this.request("/stats", { headers: this.headers(false) });
  }
}
