// Canvas state shared between the controller and the renderer. Every cached
// result carries the revision it reflects; comparing that tag against the
// session's current revision is what marks a render as stale.

export interface Observation {
  cell: number[];
  value: number;
}

export interface TaggedImage {
  revision: number;
  values: number[];
}

export interface SampleStrip {
  revision: number;
  seed: number;
  images: number[][];
}

export interface CanvasState {
  gridShape: number[];
  observations: Observation[];
  brushValue: number;
  sessionId: string | null;
  /** Last revision the server confirmed. */
  revision: number;
  /** Local edits not yet acknowledged by the server. */
  dirty: boolean;
  mean: TaggedImage | null;
  samples: SampleStrip | null;
  /** Set when a PUT failed on the network; the edit is kept locally. */
  retryBanner: boolean;
  /** Transient error message; null when nothing to show. */
  toast: string | null;
  /** Explanation while the mean view is unavailable (e.g. empty set). */
  meanDisabledReason: string | null;
}

export function initialState(gridShape: number[]): CanvasState {
  return {
    gridShape,
    observations: [],
    brushValue: 0,
    sessionId: null,
    revision: 0,
    dirty: false,
    mean: null,
    samples: null,
    retryBanner: false,
    toast: null,
    meanDisabledReason: null,
  };
}

export function sameCell(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((t, i) => t === b[i]);
}

/** Mean/Sample requests are gated on having at least one observation. */
export function canRequest(state: CanvasState): boolean {
  return state.observations.length > 0 && state.sessionId !== null;
}

/** A cached result is stale once local edits or newer PUTs outran it. */
export function isStale(state: CanvasState, tagged: { revision: number } | null): boolean {
  if (tagged === null) return false;
  return state.dirty || tagged.revision !== state.revision;
}
