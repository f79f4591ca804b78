/** Thin fetch wrapper over the retrieval service's JSON API. */

import type {
  ResultsPayload,
  SessionCreated,
  SessionMetadata,
  SessionStats,
} from "./types.js";

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.name = "ApiError";
    this.code = code;
    this.status = status;
  }
}

/** The slice of the API the controller needs; stubbed in tests. */
export interface ApiClient {
  createSession(query: string, k?: number): Promise<SessionCreated>;
  getSession(id: string): Promise<SessionMetadata>;
  getResults(id: string, limit?: number): Promise<unknown>;
  stopSession(id: string): Promise<SessionStats>;
}

function errorFromBody(body: unknown, status: number): ApiError {
  if (typeof body === "object" && body !== null) {
    const wrapped = (body as Record<string, unknown>).error;
    if (typeof wrapped === "object" && wrapped !== null) {
      const detail = wrapped as Record<string, unknown>;
      return new ApiError(
        typeof detail.code === "string" ? detail.code : "unknown",
        typeof detail.message === "string" ? detail.message : `request failed (${status})`,
        status,
      );
    }
  }
  return new ApiError("unknown", `request failed (${status})`, status);
}

export class HttpApiClient implements ApiClient {
  constructor(private readonly base: string = "") {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await fetch(this.base + path, init);
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      body = null;
    }
    if (!response.ok) {
      throw errorFromBody(body, response.status);
    }
    return body;
  }

  async createSession(query: string, k?: number): Promise<SessionCreated> {
    const payload: Record<string, unknown> = { query };
    if (k !== undefined) payload.k = k;
    return (await this.request("/v1/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    })) as SessionCreated;
  }

  async getSession(id: string): Promise<SessionMetadata> {
    return (await this.request(`/v1/sessions/${encodeURIComponent(id)}`)) as SessionMetadata;
  }

  async getResults(id: string, limit?: number): Promise<unknown> {
    const query = limit === undefined ? "" : `?limit=${limit}`;
    return this.request(`/v1/sessions/${encodeURIComponent(id)}/results${query}`);
  }

  async stopSession(id: string): Promise<SessionStats> {
    return (await this.request(`/v1/sessions/${encodeURIComponent(id)}/stop`, {
      method: "POST",
    })) as SessionStats;
  }
}
