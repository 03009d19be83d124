import { describe, expect, it } from "vitest";

import { ApiError, ServiceClient, type FetchLike } from "../src/api.js";

interface Seen {
  url: string;
  method: string;
  body?: unknown;
}

function capture(reply: unknown, status = 200): { calls: Seen[]; fetch: FetchLike } {
  const calls: Seen[] = [];
  return {
    calls,
    fetch: async (url, init) => {
      calls.push({
        url,
        method: init?.method ?? "GET",
        body: init?.body ? JSON.parse(String(init.body)) : undefined,
      });
      return new Response(JSON.stringify(reply), { status });
    },
  };
}

describe("ServiceClient", () => {
  it("hits the documented routes with JSON bodies", async () => {
    const { calls, fetch } = capture({ session_id: "abc", revision: 3, checkpoints: [], samples: [] });
    const client = new ServiceClient("http://host:8000/", fetch);

    await client.createSession("mnist16", [16, 16]);
    await client.putObservations("abc", [{ x: [0.5], v: [1] }]);
    await client.getMean("abc");
    await client.postSamples("abc", 2, 77);
    await client.getQuery("abc", [-0.25, 0.75]);
    await client.listCheckpoints();

    expect(calls.map((c) => `${c.method} ${c.url}`)).toEqual([
      "POST http://host:8000/v1/sessions",
      "PUT http://host:8000/v1/sessions/abc/observations",
      "GET http://host:8000/v1/sessions/abc/mean",
      "POST http://host:8000/v1/sessions/abc/samples",
      "GET http://host:8000/v1/sessions/abc/query?x=-0.25%2C0.75",
      "GET http://host:8000/v1/checkpoints",
    ]);
    expect(calls[0].body).toEqual({ checkpoint_id: "mnist16", grid_shape: [16, 16] });
    expect(calls[1].body).toEqual({ observations: [{ x: [0.5], v: [1] }] });
    expect(calls[3].body).toEqual({ n: 2, seed: 77 });
  });

  it("unwraps the {code, message} error envelope", async () => {
    const { fetch } = capture({ code: "empty_observations", message: "place one first" }, 409);
    const client = new ServiceClient("http://host", fetch);
    const err = await client.getMean("abc").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).code).toBe("empty_observations");
    expect((err as ApiError).message).toBe("place one first");
  });

  it("copes with non-JSON error bodies", async () => {
    const fetch: FetchLike = async () => new Response("<html>gateway</html>", { status: 502 });
    const client = new ServiceClient("http://host", fetch);
    const err = await client.getMean("abc").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).code).toBe("http_502");
  });
});
