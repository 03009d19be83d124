// Typed client for the samplefield HTTP service. Every route the UI touches
// goes through this module; nothing else in the app issues fetches.

export interface CheckpointInfo {
  id: string;
  pos_dim: number;
  value_dim: number;
  value_range: [number, number];
}

export interface ObservationWire {
  x: number[];
  v: number[];
}

export interface MeanReply {
  revision: number;
  grid_shape: number[];
  values: number[];
}

export interface SamplesReply {
  revision: number;
  samples: number[][];
}

export interface QueryBin {
  q: number;
  center_plus_mu: number[];
  sigma: number;
}

export interface QueryReply {
  revision: number;
  expected: number[];
  bins: QueryBin[];
}

/** Error envelope the service sends as {code, message} with an HTTP status. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const res = await this.fetchFn(this.baseUrl + path, init);
    if (!res.ok) {
      let code = `http_${res.status}`;
      let message = res.statusText || `request failed with status ${res.status}`;
      try {
        const payload = (await res.json()) as { code?: string; message?: string };
        if (payload.code) code = payload.code;
        if (payload.message) message = payload.message;
      } catch {
        // non-JSON error body: keep the generic code/message
      }
      throw new ApiError(res.status, code, message);
    }
    return (await res.json()) as T;
  }

  async listCheckpoints(): Promise<CheckpointInfo[]> {
    const reply = await this.request<{ checkpoints: CheckpointInfo[] }>("GET", "/v1/checkpoints");
    return reply.checkpoints;
  }

  async createSession(checkpointId: string, gridShape: number[]): Promise<string> {
    const reply = await this.request<{ session_id: string }>("POST", "/v1/sessions", {
      checkpoint_id: checkpointId,
      grid_shape: gridShape,
    });
    return reply.session_id;
  }

  /** Replaces the full observation set; resolves to the new revision. */
  async putObservations(sessionId: string, observations: ObservationWire[]): Promise<number> {
    const reply = await this.request<{ revision: number }>(
      "PUT",
      `/v1/sessions/${sessionId}/observations`,
      { observations },
    );
    return reply.revision;
  }

  getMean(sessionId: string): Promise<MeanReply> {
    return this.request<MeanReply>("GET", `/v1/sessions/${sessionId}/mean`);
  }

  postSamples(sessionId: string, n: number, seed: number): Promise<SamplesReply> {
    return this.request<SamplesReply>("POST", `/v1/sessions/${sessionId}/samples`, { n, seed });
  }

  getQuery(sessionId: string, x: number[]): Promise<QueryReply> {
    const packed = x.map((t) => String(t)).join(",");
    return this.request<QueryReply>(
      "GET",
      `/v1/sessions/${sessionId}/query?x=${encodeURIComponent(packed)}`,
    );
  }
}
