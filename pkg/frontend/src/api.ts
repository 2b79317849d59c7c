import type { CheckpointInfo, Polarity, RevisionPayload } from "./types";

/** Server error, carrying the service's {code, message} body. */
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

async function parse<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return (await resp.json()) as T;
  }
  let code = `http-${resp.status}`;
  let message = resp.statusText || "request failed";
  try {
    const body = await resp.json();
    if (body && typeof body.code === "string") {
      code = body.code;
      if (typeof body.message === "string") message = body.message;
    } else if (body && body.detail !== undefined) {
      message = JSON.stringify(body.detail);
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(code, message, resp.status);
}

export interface SessionOptions {
  gt?: Blob;
  policy?: Record<string, unknown>;
  checkpoint?: string;
}

/** Thin typed wrapper over the service's HTTP endpoints. */
export class Client {
  private readonly base: string;
  private readonly fetchFn: typeof fetch;

  constructor(baseUrl = "", fetchFn?: typeof fetch) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async createSession(image: Blob, opts: SessionOptions = {}): Promise<RevisionPayload> {
    const form = new FormData();
    form.append("image", image, "image.png");
    if (opts.gt) form.append("gt", opts.gt, "gt.png");
    if (opts.policy) form.append("policy", JSON.stringify(opts.policy));
    if (opts.checkpoint) form.append("checkpoint", opts.checkpoint);
    const resp = await this.fetchFn(`${this.base}/sessions`, {
      method: "POST",
      body: form,
    });
    return parse<RevisionPayload>(resp);
  }

  async postClick(
    sessionId: string,
    row: number,
    col: number,
    polarity: Polarity,
  ): Promise<RevisionPayload> {
    const resp = await this.fetchFn(`${this.base}/sessions/${sessionId}/clicks`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ row, col, polarity }),
    });
    return parse<RevisionPayload>(resp);
  }

  async undo(sessionId: string): Promise<RevisionPayload> {
    const resp = await this.fetchFn(`${this.base}/sessions/${sessionId}/undo`, {
      method: "POST",
    });
    return parse<RevisionPayload>(resp);
  }

  async getMask(sessionId: string, revision?: number): Promise<RevisionPayload> {
    const query = revision === undefined ? "" : `?revision=${revision}`;
    const resp = await this.fetchFn(`${this.base}/sessions/${sessionId}/mask${query}`);
    return parse<RevisionPayload>(resp);
  }

  async listCheckpoints(): Promise<CheckpointInfo[]> {
    const resp = await this.fetchFn(`${this.base}/checkpoints`);
    const body = await parse<{ checkpoints: CheckpointInfo[] }>(resp);
    return body.checkpoints;
  }
}
