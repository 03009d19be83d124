// Headless UI controller: owns the CanvasState, talks to the service through
// the typed client, and notifies the renderer after every change. All
// interaction rules live here so they can be tested without a DOM.

import { ApiError, ServiceClient, type QueryBin, type QueryReply } from "./api.js";
import { cellToCoord, gridCells } from "./coords.js";
import {
  canRequest,
  initialState,
  sameCell,
  type CanvasState,
  type Observation,
} from "./state.js";

export interface QueryView {
  revision: number;
  expected: number[];
  topBins: QueryBin[];
}

export type StateListener = (state: CanvasState) => void;

/** Default seed source: 32-bit, shown to the user for reproducibility. */
function randomSeed(): number {
  return Math.floor(Math.random() * 0x100000000);
}

export class CanvasController {
  readonly state: CanvasState;
  private listener: StateListener;
  private readonly seedFn: () => number;
  // One in-flight request per endpoint class; later calls supersede earlier
  // ones, whose responses are then discarded.
  private tickets = { observations: 0, mean: 0, samples: 0, query: 0 };

  constructor(
    private readonly client: ServiceClient,
    private readonly checkpointId: string,
    gridShape: number[],
    listener: StateListener = () => {},
    seedFn: () => number = randomSeed,
  ) {
    this.state = initialState(gridShape);
    this.listener = listener;
    this.seedFn = seedFn;
  }

  onChange(listener: StateListener): void {
    this.listener = listener;
  }

  private push(): void {
    this.listener(this.state);
  }

  canRequest(): boolean {
    return canRequest(this.state);
  }

  async connect(): Promise<void> {
    this.state.sessionId = await this.client.createSession(this.checkpointId, this.state.gridShape);
    this.push();
  }

  private requireSession(): string {
    if (this.state.sessionId === null) throw new Error("not connected");
    return this.state.sessionId;
  }

  // --- observations ---------------------------------------------------------

  async placeObservation(cell: number[], value: number): Promise<void> {
    const next = this.state.observations.filter((o) => !sameCell(o.cell, cell));
    next.push({ cell: [...cell], value });
    await this.syncObservations(next);
  }

  async removeObservation(cell: number[]): Promise<void> {
    const next = this.state.observations.filter((o) => !sameCell(o.cell, cell));
    await this.syncObservations(next);
  }

  hasObservation(cell: number[]): boolean {
    return this.state.observations.some((o) => sameCell(o.cell, cell));
  }

  /** Optimistically applies the new set, then PUTs the full replacement. */
  private async syncObservations(next: Observation[]): Promise<void> {
    const sessionId = this.requireSession();
    const wire = next.map((o) => ({
      x: cellToCoord(o.cell, this.state.gridShape),
      v: [o.value],
    }));
    this.state.observations = next;
    this.state.dirty = true;
    this.push();
    const ticket = ++this.tickets.observations;
    try {
      const revision = await this.client.putObservations(sessionId, wire);
      if (ticket !== this.tickets.observations) return; // superseded
      this.state.revision = revision;
      this.state.dirty = false;
      this.state.retryBanner = false;
    } catch (err) {
      if (ticket !== this.tickets.observations) return;
      if (err instanceof ApiError) {
        this.state.toast = err.message;
      } else {
        // Network failure: keep the local edit and offer a retry.
        this.state.retryBanner = true;
      }
    }
    this.push();
  }

  /** Re-sends the current observation set after a network failure. */
  async retrySync(): Promise<void> {
    await this.syncObservations(this.state.observations);
  }

  // --- mean -----------------------------------------------------------------

  async refreshMean(): Promise<void> {
    const sessionId = this.requireSession();
    const ticket = ++this.tickets.mean;
    try {
      let reply = await this.client.getMean(sessionId);
      if (ticket !== this.tickets.mean) return;
      if (reply.revision < this.state.revision) {
        // The server answered from before our latest PUT landed: refetch once.
        reply = await this.client.getMean(sessionId);
        if (ticket !== this.tickets.mean) return;
      }
      if (reply.values.length !== gridCells(this.state.gridShape)) {
        this.state.toast = `mean payload has ${reply.values.length} values, expected ${gridCells(this.state.gridShape)}`;
        this.push();
        return;
      }
      this.state.mean = { revision: reply.revision, values: reply.values };
      this.state.meanDisabledReason = null;
    } catch (err) {
      if (ticket !== this.tickets.mean) return;
      if (err instanceof ApiError && err.status === 409) {
        this.state.meanDisabledReason = err.message;
      } else if (err instanceof ApiError) {
        this.state.toast = err.message;
      } else {
        this.state.retryBanner = true;
      }
    }
    this.push();
  }

  // --- samples ----------------------------------------------------------------

  /** Requests n sampled images (1..4). Reusing `seed` reproduces a strip. */
  async requestSamples(n: number, seed?: number): Promise<void> {
    if (!Number.isInteger(n) || n < 1 || n > 4) {
      throw new RangeError(`n must be 1..4, got ${n}`);
    }
    const sessionId = this.requireSession();
    const usedSeed = seed ?? this.seedFn();
    const ticket = ++this.tickets.samples;
    try {
      const reply = await this.client.postSamples(sessionId, n, usedSeed);
      if (ticket !== this.tickets.samples) return;
      this.state.samples = { revision: reply.revision, seed: usedSeed, images: reply.samples };
    } catch (err) {
      if (ticket !== this.tickets.samples) return;
      if (err instanceof ApiError) {
        this.state.toast = err.message;
      } else {
        this.state.retryBanner = true;
      }
    }
    this.push();
  }

  /** Re-requests the last strip with its recorded seed. */
  async repeatSamples(): Promise<void> {
    const last = this.state.samples;
    if (last === null) throw new Error("no strip to repeat");
    await this.requestSamples(last.images.length, last.seed);
  }

  // --- per-cell query ---------------------------------------------------------

  /** Hover inspection: expected value plus the top-3 bins by weight. */
  async queryCell(cell: number[]): Promise<QueryView | null> {
    const sessionId = this.requireSession();
    const ticket = ++this.tickets.query;
    let reply: QueryReply;
    try {
      reply = await this.client.getQuery(sessionId, cellToCoord(cell, this.state.gridShape));
    } catch {
      return null; // hover info is best-effort
    }
    if (ticket !== this.tickets.query) return null;
    const topBins = [...reply.bins].sort((a, b) => b.q - a.q).slice(0, 3);
    return { revision: reply.revision, expected: reply.expected, topBins };
  }

  clearToast(): void {
    this.state.toast = null;
    this.push();
  }
}
