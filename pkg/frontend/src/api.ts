/** Typed client for the alignment service HTTP API. */

export interface NodeDoc {
  id: string;
  kind: string;
  label: string;
}

export interface GraphDoc {
  provenance: string;
  nodes: NodeDoc[];
  edges: [string, string][];
}

export interface MappingPair {
  source: string;
  target: string;
  confidence: number;
}

export interface MappingDoc {
  pairs: MappingPair[];
  unmatched_target: string[];
}

export type ItemKind = "collision" | "unmatched-target" | "edge-violation";

export interface ItemPayload {
  target?: string;
  sources?: string[];
  source_edge?: [string, string];
  mapped_non_edge?: [string, string];
}

export interface ReportItem {
  kind: ItemKind;
  payload: ItemPayload;
  status: "open" | "accepted";
  key: string;
}

export interface ReportDoc {
  round: number;
  items: ReportItem[];
}

export interface ProjectState {
  project_id: string;
  state: "idle" | "matching" | "awaiting-resolution" | "converged";
  round: number;
  accepted: string[];
  pins: [string, string][];
  history: number[];
  pending_edits: boolean;
  source: GraphDoc | null;
  target: GraphDoc | null;
  mapping: MappingDoc | null;
  report: ReportDoc | null;
}

export interface JobState {
  job_id: string;
  project_id: string;
  status: "running" | "done" | "failed";
  progress: { iteration: number; total: number };
  error: string | null;
}

export interface GraphEditDoc {
  op: "add-node" | "remove-node" | "add-edge" | "remove-edge" | "set-attribute";
  targets: string[];
  attr?: { kind: string; label: string };
}

export interface ResolutionPayload {
  round: number;
  acceptances: string[];
  edits_source: GraphEditDoc[];
  edits_target: GraphEditDoc[];
  pins: [string, string][];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

async function asError(resp: Response): Promise<ApiError> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body, keep the status text
  }
  return new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!resp.ok) throw await asError(resp);
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string; version: string }> {
    return this.request("/healthz");
  }

  createProject(payload: {
    source: GraphDoc;
    target: GraphDoc;
    config?: Record<string, unknown>;
    vocab?: { labels: string[]; aliases?: Record<string, string> };
  }): Promise<{ project_id: string }> {
    return this.request("/projects", { method: "POST", body: JSON.stringify(payload) });
  }

  getProject(pid: string, round?: number): Promise<ProjectState> {
    const q = round === undefined ? "" : `?round=${round}`;
    return this.request(`/projects/${pid}${q}`);
  }

  triggerMatch(pid: string): Promise<{ job_id: string }> {
    return this.request(`/projects/${pid}/match`, { method: "POST" });
  }

  getJob(pid: string, jobId: string): Promise<JobState> {
    return this.request(`/projects/${pid}/jobs/${jobId}`);
  }

  submitResolution(pid: string, payload: ResolutionPayload): Promise<unknown> {
    return this.request(`/projects/${pid}/resolutions`, {
      method: "POST",
      body: JSON.stringify(payload),
    });
  }
}
