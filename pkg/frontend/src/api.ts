/** Typed client for the editing service. Every mutation returns the server's
 * response verbatim; nothing is updated optimistically. */

import {
  EditWire,
  ErrorBody,
  GenerateResponse,
  NodeRecord,
  PatchResponse,
  SessionWire,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ErrorBody,
  ) {
    super(`${status}: ${body.message}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, payload as ErrorBody);
    }
    return payload as T;
  }

  async createSession(source: { layout?: NodeRecord[]; corpus_id?: string }): Promise<string> {
    const body = await this.request<{ session_id: string }>("POST", "/sessions", source);
    return body.session_id;
  }

  getSession(sessionId: string): Promise<SessionWire> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  patchRelations(sessionId: string, edits: EditWire[]): Promise<PatchResponse> {
    return this.request("PATCH", `/sessions/${sessionId}/relations`, edits);
  }

  randomize(sessionId: string, count: number, seed: number): Promise<PatchResponse> {
    return this.request("POST", `/sessions/${sessionId}/randomize`, { count, seed });
  }

  generate(
    sessionId: string,
    options: { backend?: string; seed?: number; insert_random?: number },
  ): Promise<GenerateResponse> {
    return this.request("POST", `/sessions/${sessionId}/generate`, {
      backend: options.backend ?? "solver",
      seed: options.seed ?? 0,
      insert_random: options.insert_random ?? 0,
    });
  }

  exportLayout(sessionId: string): Promise<NodeRecord[]> {
    return this.request("GET", `/sessions/${sessionId}/export`);
  }
}
