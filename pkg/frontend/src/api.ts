// Typed client for the llmsink control API. Only documented endpoints
// are issued here; the contract test replays recorded responses.

export interface WindowInfo {
  start: string;
  end: string;
}

export interface StatusSnapshot {
  queries_total: number;
  queries_blocked: number;
  active_entries: number;
  current_window: WindowInfo | null;
  uptime_secs: number;
}

export interface QueryRecord {
  timestamp: string;
  client: string;
  qname: string;
  qtype: number;
  outcome: string;
  upstream_used: string | null;
  matched_entry: string | null;
}

export interface VerdictRow {
  verdict_id: string;
  verdict: string;
  reason: string;
  model_id: string;
  latency_ms: number;
  dossier_url: string;
  created_at: string;
  block_status: string;
}

export interface WindowRequest {
  tag: string;
  start: string | null;
  end: string | null;
}

export interface WindowResponse {
  tag: string;
  affected: number;
  window: WindowInfo | null;
}

export interface OverrideRequest {
  domain: string;
  action: "whitelist" | "unwhitelist" | "block";
}

export interface OverrideResponse {
  domain: string;
  action: string;
  blocked: boolean;
  whitelisted: boolean;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  // The token lives in memory only; never persisted.
  token: string | null = null;

  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path);
    if (!response.ok) {
      throw new ApiError(response.status, `GET ${path} -> ${response.status}`);
    }
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    const response = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers,
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      throw new ApiError(response.status, `POST ${path} -> ${response.status}`);
    }
    return (await response.json()) as T;
  }

  status(): Promise<StatusSnapshot> {
    return this.get("/api/status");
  }

  queries(limit = 100): Promise<QueryRecord[]> {
    return this.get(`/api/queries?limit=${limit}`);
  }

  verdicts(status: "all" | "pending" = "all"): Promise<VerdictRow[]> {
    return this.get(`/api/verdicts?status=${status}`);
  }

  setWindow(request: WindowRequest): Promise<WindowResponse> {
    return this.post("/api/window", request);
  }

  override(request: OverrideRequest): Promise<OverrideResponse> {
    return this.post("/api/override", request);
  }
}
