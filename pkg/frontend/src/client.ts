/** Typed fetch client for the editing service. */

import type {
  CloudWire,
  CreateSessionResponse,
  EditRequest,
  EditResponse,
  HistoryResponse,
  ParamRegistryResponse,
} from "./types.js";

export class ServiceError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ServiceError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class EditServiceClient {
  constructor(private baseUrl: string,
              private fetchFn: FetchLike = (input, init) => fetch(input, init)) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ServiceError(0, `server unreachable: ${String(err)}`);
    }
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const parsed = await resp.json();
        detail = typeof parsed.detail === "string" ? parsed.detail : JSON.stringify(parsed.detail);
      } catch {
        /* non-JSON error body */
      }
      throw new ServiceError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string; model_points: number }> {
    return this.request("GET", "/health");
  }

  createSessionFromCloud(cloud: CloudWire): Promise<CreateSessionResponse> {
    return this.request("POST", "/sessions", { cloud });
  }

  createSessionFromShape(category: string, params: Record<string, number | boolean>,
                         seed = 0): Promise<CreateSessionResponse> {
    return this.request("POST", "/sessions", { category, params, seed });
  }

  edit(sessionId: string, req: EditRequest): Promise<EditResponse> {
    return this.request("POST", `/sessions/${sessionId}/edit`, req);
  }

  history(sessionId: string): Promise<HistoryResponse> {
    return this.request("GET", `/sessions/${sessionId}/history`);
  }

  undo(sessionId: string): Promise<{ current: number }> {
    return this.request("POST", `/sessions/${sessionId}/undo`);
  }

  paramRegistry(category: string): Promise<ParamRegistryResponse> {
    return this.request("GET", `/params/${category}`);
  }
}
