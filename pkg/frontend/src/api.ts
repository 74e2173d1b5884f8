// Thin typed client for the gateway REST API. The base URL comes from (in
// order) an explicit constructor argument, the VITE_GATEWAY_URL build-time
// env, or a window.SARSCOUT_GATEWAY_URL override injected at runtime.

import type {
  ApiErrorBody,
  GroundingReport,
  Mode,
  SessionCreated,
  Transcript,
  Turn,
} from "./types";

declare global {
  interface Window {
    SARSCOUT_GATEWAY_URL?: string;
  }
}

export class ApiError extends Error {
  readonly type: string;
  readonly status: number;

  constructor(status: number, type: string, message: string) {
    super(message);
    this.status = status;
    this.type = type;
  }
}

export function resolveBaseUrl(explicit?: string): string {
  if (explicit) return explicit.replace(/\/$/, "");
  if (typeof window !== "undefined" && window.SARSCOUT_GATEWAY_URL) {
    return window.SARSCOUT_GATEWAY_URL.replace(/\/$/, "");
  }
  const fromEnv = import.meta.env?.VITE_GATEWAY_URL as string | undefined;
  return (fromEnv ?? "http://127.0.0.1:8000").replace(/\/$/, "");
}

async function parseError(resp: Response): Promise<ApiError> {
  let type = "UnknownError";
  let message = `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as ApiErrorBody;
    type = body.error.type;
    message = body.error.message;
  } catch {
    // non-JSON error body; keep the status-line message
  }
  return new ApiError(resp.status, type, message);
}

export class GatewayClient {
  readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;

  constructor(baseUrl?: string, fetchFn: typeof fetch = fetch) {
    this.baseUrl = resolveBaseUrl(baseUrl);
    this.fetchFn = fetchFn;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  async createSession(image: File | Blob, mode: Mode, name = "upload.png"): Promise<SessionCreated> {
    const form = new FormData();
    form.append("image", image, image instanceof File ? image.name : name);
    form.append("mode", mode);
    return this.request<SessionCreated>("/v1/sessions", { method: "POST", body: form });
  }

  async ask(sessionId: string, question: string): Promise<Turn> {
    return this.request<Turn>(`/v1/sessions/${encodeURIComponent(sessionId)}/turns`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ question }),
    });
  }

  async transcript(sessionId: string): Promise<Transcript> {
    return this.request<Transcript>(`/v1/sessions/${encodeURIComponent(sessionId)}`);
  }

  async grounding(sessionId: string, turn: number): Promise<GroundingReport> {
    return this.request<GroundingReport>(
      `/v1/sessions/${encodeURIComponent(sessionId)}/grounding?turn=${turn}`,
    );
  }

  overlayUrl(sessionId: string, turn?: number): string {
    const suffix = turn === undefined ? "" : `?turn=${turn}`;
    return `${this.baseUrl}/v1/sessions/${encodeURIComponent(sessionId)}/overlay${suffix}`;
  }
}
