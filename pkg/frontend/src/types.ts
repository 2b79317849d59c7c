export type Polarity = "foreground" | "background";

/** One click as echoed by the server. */
export interface ServerClick {
  row: number;
  col: number;
  polarity: Polarity;
  size_px: number;
}

/** Response body shared by session creation, clicks, undo and mask fetch. */
export interface RevisionPayload {
  session_id: string;
  revision: number;
  width: number;
  height: number;
  n_clicks: number;
  clicks: ServerClick[];
  applied_click_size: number | null;
  mask_png_b64: string;
  mask_digest: string;
  policy: Record<string, unknown>;
  checkpoint: string | null;
  dsc?: number;
}

export interface CheckpointInfo {
  id: string;
  digest: string;
  [key: string]: unknown;
}
