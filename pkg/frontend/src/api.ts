/**
 * Typed HTTP client for the session service.
 *
 * Thin by intent: each method is one request, one zod parse, one typed
 * return. Transport-level retry and step-flow policy live in the runner.
 */

import {
  Ack,
  ackSchema,
  ExportBundle,
  exportBundleSchema,
  Health,
  healthSchema,
  NextResponse,
  nextResponseSchema,
  SessionCreated,
  sessionCreatedSchema,
} from "./schemas";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** A refused step submission; `kind` tells the runner how to react. */
export class SubmitRejected extends ApiError {
  readonly kind: "conflict" | "invalid";

  constructor(status: number, detail: string) {
    super(status, detail);
    this.name = "SubmitRejected";
    this.kind = status === 409 ? "conflict" : "invalid";
  }
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error body; fall through
  }
  return resp.statusText || `status ${resp.status}`;
}

async function parseJson<T>(resp: Response, parse: (raw: unknown) => T): Promise<T> {
  return parse((await resp.json()) as unknown);
}

export interface CreateSessionRequest {
  participant: Record<string, unknown>;
  seed: number;
  config?: Record<string, unknown>;
}

export type ByteRange = { start: number; end?: number } | { suffix: number };

export interface StimulusChunk {
  status: 200 | 206;
  bytes: Uint8Array;
  contentRange: string | null;
  etag: string | null;
}

function rangeHeader(range: ByteRange): string {
  if ("suffix" in range) return `bytes=-${range.suffix}`;
  return `bytes=${range.start}-${range.end ?? ""}`;
}

export class LabServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  async health(): Promise<Health> {
    const resp = await this.fetchFn(`${this.baseUrl}/health`);
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    return parseJson(resp, (raw) => healthSchema.parse(raw));
  }

  async createSession(req: CreateSessionRequest): Promise<SessionHandle> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    if (resp.status !== 201) throw new ApiError(resp.status, await errorDetail(resp));
    const created = await parseJson(resp, (raw) => sessionCreatedSchema.parse(raw));
    return new SessionHandle(this.baseUrl, created, this.fetchFn);
  }

  /** Re-attach to an existing session (page reload, resumed run). */
  session(sessionId: string, token: string): SessionHandle {
    return new SessionHandle(
      this.baseUrl,
      { session_id: sessionId, token, status: "created", schema_version: 0 },
      this.fetchFn,
    );
  }
}

export class SessionHandle {
  readonly sessionId: string;
  private readonly token: string;

  constructor(
    readonly baseUrl: string,
    created: SessionCreated,
    private readonly fetchFn: FetchLike = fetch,
  ) {
    this.sessionId = created.session_id;
    this.token = created.token;
  }

  private url(suffix: string): string {
    return `${this.baseUrl}/sessions/${this.sessionId}${suffix}`;
  }

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    return { "x-session-token": this.token, ...extra };
  }

  async next(): Promise<NextResponse> {
    const resp = await this.fetchFn(this.url("/next"), { headers: this.headers() });
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    return parseJson(resp, (raw) => nextResponseSchema.parse(raw));
  }

  async submit(stepId: number, payload: Record<string, unknown>): Promise<Ack> {
    const resp = await this.fetchFn(this.url(`/steps/${stepId}`), {
      method: "POST",
      headers: this.headers({ "content-type": "application/json" }),
      body: JSON.stringify({ payload }),
    });
    if (resp.status === 409 || resp.status === 422) {
      throw new SubmitRejected(resp.status, await errorDetail(resp));
    }
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    return parseJson(resp, (raw) => ackSchema.parse(raw));
  }

  async stimulus(label: string, range?: ByteRange): Promise<StimulusChunk> {
    const headers = this.headers(range ? { range: rangeHeader(range) } : {});
    const resp = await this.fetchFn(this.url(`/stimuli/${label}`), { headers });
    if (resp.status !== 200 && resp.status !== 206) {
      throw new ApiError(resp.status, await errorDetail(resp));
    }
    return {
      status: resp.status,
      bytes: new Uint8Array(await resp.arrayBuffer()),
      contentRange: resp.headers.get("content-range"),
      etag: resp.headers.get("etag"),
    };
  }

  async exportBundle(): Promise<ExportBundle> {
    const resp = await this.fetchFn(this.url("/export"), { headers: this.headers() });
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    return parseJson(resp, (raw) => exportBundleSchema.parse(raw));
  }

  async abort(reason = "aborted by client"): Promise<void> {
    const resp = await this.fetchFn(this.url("/abort"), {
      method: "POST",
      headers: this.headers({ "content-type": "application/json" }),
      body: JSON.stringify({ reason }),
    });
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
  }
}
