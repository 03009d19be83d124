// Contract suite for the canvas controller, run headlessly against the stub
// server: observation gating, revision tagging and staleness, seed-reproducible
// sample strips, and the cell-coordinate round trip.

import { describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { CanvasController } from "../src/controller.js";
import { isStale } from "../src/state.js";
import { stubServer, type StubOptions } from "./stub.js";

async function connected(gridShape = [4, 4], options: StubOptions = {}, seedFn?: () => number) {
  const server = stubServer(gridShape, options);
  const client = new ServiceClient("http://stub", server.fetch);
  const ctl = new CanvasController(client, "stub", gridShape, () => {}, seedFn);
  await ctl.connect();
  return { server, ctl };
}

describe("observation gating", () => {
  it("enables mean/sample requests on the first placement only", async () => {
    const { ctl } = await connected();
    expect(ctl.canRequest()).toBe(false);
    await ctl.placeObservation([1, 2], 0.5);
    expect(ctl.canRequest()).toBe(true);
  });

  it("returns to the empty-set state when the last cell is removed", async () => {
    const { server, ctl } = await connected();
    await ctl.placeObservation([1, 2], 0.5);
    await ctl.removeObservation([1, 2]);
    expect(ctl.state.observations).toEqual([]);
    expect(ctl.canRequest()).toBe(false);
    expect(server.putBodies.at(-1)).toEqual([]); // replacement PUT, not a no-op
  });

  it("replaces the value when painting an already-placed cell", async () => {
    const { server, ctl } = await connected();
    await ctl.placeObservation([0, 0], 0.5);
    await ctl.placeObservation([0, 0], -0.25);
    expect(ctl.state.observations).toHaveLength(1);
    expect(ctl.state.observations[0].value).toBe(-0.25);
    expect(server.putBodies.at(-1)).toHaveLength(1);
  });

  it("refuses mean requests server-side while empty, with an explanation", async () => {
    const { ctl } = await connected();
    await ctl.refreshMean();
    expect(ctl.state.mean).toBeNull();
    expect(ctl.state.meanDisabledReason).toBe("place at least one observation first");
  });
});

describe("coordinate round trip", () => {
  it("sends corner cells at the documented cell centers", async () => {
    const { server, ctl } = await connected([16, 16]);
    await ctl.placeObservation([0, 0], 1);
    await ctl.placeObservation([15, 15], -1);
    expect(server.putBodies.at(-1)).toEqual([
      { x: [-0.9375, -0.9375], v: [1] },
      { x: [0.9375, 0.9375], v: [-1] },
    ]);
  });

  it("queries a hovered cell at its center coordinate", async () => {
    const { server, ctl } = await connected([4, 4]);
    await ctl.placeObservation([0, 0], 1);
    await ctl.queryCell([2, 1]);
    expect(server.queryXs.at(-1)).toBe("0.25,-0.25");
  });
});

describe("revision tagging", () => {
  it("tags the rendered mean with the revision it reflects", async () => {
    const { ctl } = await connected();
    await ctl.placeObservation([0, 0], 0.5);
    await ctl.placeObservation([1, 1], -0.5);
    expect(ctl.state.revision).toBe(2);
    await ctl.refreshMean();
    expect(ctl.state.mean?.revision).toBe(2);
    expect(isStale(ctl.state, ctl.state.mean)).toBe(false);
  });

  it("marks cached results stale once local edits outrun the server", async () => {
    const { ctl } = await connected();
    await ctl.placeObservation([0, 0], 0.5);
    await ctl.refreshMean();
    await ctl.requestSamples(1, 9);
    expect(isStale(ctl.state, ctl.state.mean)).toBe(false);
    await ctl.placeObservation([2, 2], 0.1); // revision moves past both caches
    expect(isStale(ctl.state, ctl.state.mean)).toBe(true);
    expect(isStale(ctl.state, ctl.state.samples)).toBe(true);
  });

  it("refetches once when the mean answer lags the known revision", async () => {
    const { server, ctl } = await connected([4, 4], { meanRevisionQueue: [1] });
    await ctl.placeObservation([0, 0], 0.5);
    await ctl.placeObservation([1, 1], 0.5);
    await ctl.refreshMean(); // first answer says revision 1 < 2 -> one retry
    expect(server.meanGets).toBe(2);
    expect(ctl.state.mean?.revision).toBe(2);
  });

  it("keeps a still-stale second answer but marks it", async () => {
    const { server, ctl } = await connected([4, 4], { meanRevisionQueue: [1, 1] });
    await ctl.placeObservation([0, 0], 0.5);
    await ctl.placeObservation([1, 1], 0.5);
    await ctl.refreshMean();
    expect(server.meanGets).toBe(2); // exactly one refetch, no loop
    expect(ctl.state.mean?.revision).toBe(1);
    expect(isStale(ctl.state, ctl.state.mean)).toBe(true);
  });

  it("rejects a mean payload whose length does not match the grid", async () => {
    const { ctl } = await connected([4, 4], { meanLengthOverride: 7 });
    await ctl.placeObservation([0, 0], 0.5);
    await ctl.refreshMean();
    expect(ctl.state.mean).toBeNull(); // no render
    expect(ctl.state.toast).toMatch(/7 values, expected 16/);
  });
});

describe("sample strips", () => {
  it("generates a visible seed and reproduces the strip from it", async () => {
    const seeds = [111, 222];
    const { ctl } = await connected([4, 4], {}, () => seeds.shift()!);
    await ctl.placeObservation([0, 0], 0.5);

    await ctl.requestSamples(3);
    expect(ctl.state.samples?.seed).toBe(111);
    expect(ctl.state.samples?.images).toHaveLength(3);
    const first = ctl.state.samples!.images.map((img) => [...img]);

    await ctl.repeatSamples(); // same seed -> identical thumbnails
    expect(ctl.state.samples?.seed).toBe(111);
    expect(ctl.state.samples?.images).toEqual(first);

    await ctl.requestSamples(3); // fresh seed -> different strip
    expect(ctl.state.samples?.seed).toBe(222);
    expect(ctl.state.samples?.images).not.toEqual(first);
  });

  it("renders n thumbnails for n=4 and rejects out-of-range n", async () => {
    const { ctl } = await connected();
    await ctl.placeObservation([0, 0], 0.5);
    await ctl.requestSamples(4, 5);
    expect(ctl.state.samples?.images).toHaveLength(4);
    await expect(ctl.requestSamples(0)).rejects.toThrow(RangeError);
    await expect(ctl.requestSamples(5)).rejects.toThrow(RangeError);
  });

  it("surfaces a 409 inline when the set was emptied meanwhile", async () => {
    const { ctl } = await connected();
    await ctl.placeObservation([0, 0], 0.5);
    await ctl.removeObservation([0, 0]);
    await ctl.requestSamples(1, 5).catch(() => {});
    expect(ctl.state.samples).toBeNull();
    expect(ctl.state.toast).toBe("place at least one observation first");
  });
});

describe("failure handling", () => {
  it("keeps the optimistic edit and raises the retry banner on network failure", async () => {
    const { server, ctl } = await connected([4, 4], { failNextPut: true });
    await ctl.placeObservation([3, 3], 0.75);
    expect(ctl.state.observations).toHaveLength(1); // state preserved
    expect(ctl.state.retryBanner).toBe(true);
    expect(ctl.state.dirty).toBe(true);

    await ctl.retrySync();
    expect(ctl.state.retryBanner).toBe(false);
    expect(ctl.state.revision).toBe(1);
    expect(server.observations).toHaveLength(1);
  });

  it("lets a later mean request supersede an earlier in-flight one", async () => {
    const gate: Array<() => void> = [];
    const server = stubServer([4, 4]);
    const gated = new ServiceClient("http://stub", async (url, init) => {
      const res = await server.fetch(url, init);
      if ((init?.method ?? "GET") === "GET" && url.includes("/mean")) {
        await new Promise<void>((resolve) => gate.push(resolve));
      }
      return res;
    });
    const ctl = new CanvasController(gated, "stub", [4, 4]);
    await ctl.connect();
    await ctl.placeObservation([0, 0], 0.5);

    const first = ctl.refreshMean();
    await ctl.placeObservation([1, 1], 0.5); // bumps revision to 2
    const second = ctl.refreshMean();
    // Release in reverse order: the late first answer must be discarded.
    while (gate.length < 2) await Promise.resolve();
    gate[1]();
    await second;
    const rendered = ctl.state.mean!;
    gate[0]();
    await first;
    expect(ctl.state.mean).toBe(rendered);
    expect(ctl.state.mean.revision).toBe(2);
  });
});

describe("query inspection", () => {
  it("reports the expected value and the top-3 bins by weight", async () => {
    const { ctl } = await connected();
    await ctl.placeObservation([0, 0], 0.5);
    const view = await ctl.queryCell([1, 1]);
    expect(view?.expected).toEqual([0.25]);
    expect(view?.topBins.map((b) => b.q)).toEqual([0.4, 0.3, 0.2]);
    expect(view?.revision).toBe(1);
  });
});
