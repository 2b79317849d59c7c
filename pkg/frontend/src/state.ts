import type { Polarity, RevisionPayload, ServerClick } from "./types";
import type { SessionOptions } from "./api";

/** The slice of the HTTP client the controller needs (test seam). */
export interface ClickApi {
  createSession(image: Blob, opts?: SessionOptions): Promise<RevisionPayload>;
  postClick(sessionId: string, row: number, col: number, polarity: Polarity): Promise<RevisionPayload>;
  undo(sessionId: string): Promise<RevisionPayload>;
}

export interface ViewState {
  sessionId: string | null;
  revision: number; // displayed revision
  width: number;
  height: number;
  opacity: number;
  markers: ServerClick[]; // mirrors the server click list at the displayed revision
  pending: boolean; // at most one in-flight mutation per session
  maskB64: string | null;
  maskDigest: string | null;
  appliedClickSize: number | null;
  dsc: number | null;
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    revision: -1,
    width: 0,
    height: 0,
    opacity: 0.45,
    markers: [],
    pending: false,
    maskB64: null,
    maskDigest: null,
    appliedClickSize: null,
    dsc: null,
  };
}

export interface ClickOutcome {
  accepted: boolean;
  reason?: "no-session" | "pending";
}

type Listener = (state: ViewState) => void;

/**
 * Session state machine: serializes mutations (single-flight), applies
 * server payloads, and refuses to move the rendered mask backwards.
 */
export class SessionController {
  private state: ViewState = initialState();
  private readonly listeners: Listener[] = [];

  constructor(private readonly api: ClickApi) {}

  get view(): ViewState {
    return this.state;
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  setOpacity(value: number): void {
    this.state = { ...this.state, opacity: Math.min(1, Math.max(0, value)) };
    this.emit();
  }

  /**
   * Adopt a server payload. Within one session a payload older than the
   * displayed revision is dropped (monotonicity); a payload for a new
   * session replaces the view wholesale.
   */
  applyServerPayload(p: RevisionPayload): boolean {
    if (p.session_id === this.state.sessionId && p.revision < this.state.revision) {
      return false;
    }
    this.state = {
      ...this.state,
      sessionId: p.session_id,
      revision: p.revision,
      width: p.width,
      height: p.height,
      markers: p.clicks.map((c) => ({ ...c })),
      maskB64: p.mask_png_b64,
      maskDigest: p.mask_digest,
      appliedClickSize: p.applied_click_size,
      dsc: p.dsc ?? null,
    };
    this.emit();
    return true;
  }

  async open(image: Blob, opts: SessionOptions = {}): Promise<ViewState> {
    const payload = await this.api.createSession(image, opts);
    this.state = { ...initialState(), opacity: this.state.opacity };
    this.applyServerPayload(payload);
    return this.state;
  }

  async click(row: number, col: number, polarity: Polarity): Promise<ClickOutcome> {
    return this.mutate(() => this.api.postClick(this.state.sessionId!, row, col, polarity));
  }

  async undo(): Promise<ClickOutcome> {
    return this.mutate(() => this.api.undo(this.state.sessionId!));
  }

  private async mutate(call: () => Promise<RevisionPayload>): Promise<ClickOutcome> {
    if (!this.state.sessionId) {
      return { accepted: false, reason: "no-session" };
    }
    if (this.state.pending) {
      return { accepted: false, reason: "pending" };
    }
    this.state = { ...this.state, pending: true };
    this.emit();
    try {
      const payload = await call();
      this.applyServerPayload(payload);
      return { accepted: true };
    } finally {
      this.state = { ...this.state, pending: false };
      this.emit();
    }
  }
}
