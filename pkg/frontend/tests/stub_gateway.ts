// In-memory gateway double: answers the REST surface the console uses and
// records every request so tests can assert what went over the wire.

import { GatewayClient } from "../src/api";
import type { Mode, Transcript, Turn } from "../src/types";
import { GROUNDING_REPORT, makeTranscript, makeTurn } from "./fixtures";

export interface RecordedCall {
  method: string;
  path: string;
  body?: unknown;
  form?: FormData;
}

export class StubGateway {
  calls: RecordedCall[] = [];
  transcript: Transcript | null = null;
  failNextAsk: { status: number; type: string; message: string } | null = null;

  private json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  private error(status: number, type: string, message: string): Response {
    return this.json({ error: { type, message } }, status);
  }

  readonly fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = new URL(String(input));
    const method = (init?.method ?? "GET").toUpperCase();
    const path = url.pathname + url.search;
    const call: RecordedCall = { method, path };
    if (init?.body instanceof FormData) call.form = init.body;
    else if (typeof init?.body === "string") call.body = JSON.parse(init.body);
    this.calls.push(call);

    if (method === "POST" && url.pathname === "/v1/sessions") {
      const mode = (call.form?.get("mode") as Mode) ?? "with_boxes";
      this.transcript = makeTranscript(mode, [makeTurn(0)]);
      return this.json(
        { session_id: this.transcript.session_id, turn0: this.transcript.turns[0] },
        201,
      );
    }
    if (method === "POST" && /^\/v1\/sessions\/[^/]+\/turns$/.test(url.pathname)) {
      if (!this.transcript) return this.error(404, "NotFoundError", "no session");
      if (this.failNextAsk) {
        const { status, type, message } = this.failNextAsk;
        this.failNextAsk = null;
        return this.error(status, type, message);
      }
      const question = (call.body as { question: string }).question;
      const turn: Turn = makeTurn(this.transcript.turns.length, { user_text: question });
      this.transcript = { ...this.transcript, turns: [...this.transcript.turns, turn] };
      return this.json(turn);
    }
    if (method === "GET" && /^\/v1\/sessions\/[^/]+$/.test(url.pathname)) {
      if (!this.transcript) return this.error(404, "NotFoundError", "no session");
      return this.json(this.transcript);
    }
    if (method === "GET" && /^\/v1\/sessions\/[^/]+\/grounding$/.test(url.pathname)) {
      const turn = Number(url.searchParams.get("turn"));
      return this.json({ ...GROUNDING_REPORT, turn_index: turn });
    }
    return this.error(404, "NotFoundError", `unhandled ${method} ${path}`);
  };

  client(): GatewayClient {
    return new GatewayClient("http://stub-gateway", this.fetch);
  }

  callCount(): number {
    return this.calls.length;
  }
}
