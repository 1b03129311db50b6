import http from "node:http";
import type { AddressInfo } from "node:net";
import { afterEach, describe, expect, it } from "vitest";

import { ApiError, ReviewApi } from "../src/api.js";

interface Seen {
  method: string;
  url: string;
  headers: http.IncomingHttpHeaders;
  body: string;
}

function stubServer(
  handler: (seen: Seen) => { status: number; body: unknown },
): Promise<{ base: string; seen: Seen[]; close: () => Promise<void> }> {
  const seen: Seen[] = [];
  const server = http.createServer((req, res) => {
    let body = "";
    req.on("data", (chunk) => (body += chunk));
    req.on("end", () => {
      const record: Seen = {
        method: req.method ?? "",
        url: req.url ?? "",
        headers: req.headers,
        body,
      };
      seen.push(record);
      const { status, body: out } = handler(record);
      const payload = JSON.stringify(out);
      res.writeHead(status, { "Content-Type": "application/json" });
      res.end(payload);
    });
  });
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const { port } = server.address() as AddressInfo;
      resolve({
        base: `http://127.0.0.1:${port}`,
        seen,
        close: () => new Promise((done) => server.close(() => done())),
      });
    });
  });
}

let cleanup: (() => Promise<void>) | null = null;

afterEach(async () => {
  if (cleanup) await cleanup();
  cleanup = null;
});

describe("ReviewApi", () => {
  it("lists pending with paging params", async () => {
    const srv = await stubServer(() => ({
      status: 200,
      body: { proposals: [], total: 0, limit: 10, offset: 5 },
    }));
    cleanup = srv.close;
    const api = new ReviewApi(srv.base);
    const page = await api.listPending(10, 5);
    expect(page.total).toBe(0);
    expect(srv.seen[0]?.url).toBe("/proposals?status=pending&limit=10&offset=5");
    expect(srv.seen[0]?.method).toBe("GET");
  });

  it("posts decisions with only the provided fields", async () => {
    const srv = await stubServer(() => ({ status: 200, body: { status: "accepted" } }));
    cleanup = srv.close;
    const api = new ReviewApi(srv.base);
    await api.decide("00000000-0000-0000-0000-000000000001", "accept");
    await api.decide("00000000-0000-0000-0000-000000000002", "edit", ["x", "y", "z"], "typo");
    expect(JSON.parse(srv.seen[0]?.body ?? "")).toEqual({ action: "accept" });
    expect(JSON.parse(srv.seen[1]?.body ?? "")).toEqual({
      action: "edit",
      texts: ["x", "y", "z"],
      note: "typo",
    });
    expect(srv.seen[1]?.url).toBe(
      "/proposals/00000000-0000-0000-0000-000000000002/decision",
    );
  });

  it("sends the shared token header when configured", async () => {
    const srv = await stubServer(() => ({ status: 200, body: {} }));
    cleanup = srv.close;
    await new ReviewApi(srv.base, "sekrit").stats();
    expect(srv.seen[0]?.headers["x-review-token"]).toBe("sekrit");
    await new ReviewApi(srv.base).stats();
    expect(srv.seen[1]?.headers["x-review-token"]).toBeUndefined();
  });

  it("raises ApiError with the server's message and status", async () => {
    const srv = await stubServer(() => ({
      status: 409,
      body: { error: "proposal already decided" },
    }));
    cleanup = srv.close;
    const api = new ReviewApi(srv.base);
    const err = await api
      .decide("00000000-0000-0000-0000-000000000001", "accept")
      .then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).message).toMatch(/already decided/);
  });

  it("rejects when the service is unreachable", async () => {
    const srv = await stubServer(() => ({ status: 200, body: {} }));
    await srv.close();
    const api = new ReviewApi(srv.base);
    await expect(api.stats()).rejects.toThrow();
  });

  it("finalize passes an explicit path through", async () => {
    const srv = await stubServer(() => ({
      status: 200,
      body: { path: "out.jsonl", manifest: { source: "review", counts: { records: 0, by_review_status: {} } } },
    }));
    cleanup = srv.close;
    const api = new ReviewApi(srv.base);
    await api.finalize("out.jsonl");
    await api.finalize();
    expect(JSON.parse(srv.seen[0]?.body ?? "")).toEqual({ path: "out.jsonl" });
    expect(JSON.parse(srv.seen[1]?.body ?? "")).toEqual({});
  });
});
