// Wire protocol of the decode service. Must stay in lockstep with the
// server's schemas; the shared golden fixtures in
// tests/fixtures/wire_messages.json pin both sides.

export interface ViewMessage {
  type: "view";
  t: number;
  theta_deg: number;
  phi_deg: number;
  req_id: number;
}

export interface FrameMessage {
  type: "frame";
  req_id: number;
  decode_ms: number;
  image_b64: string;
  format: "png" | "jpeg";
}

export interface SupersededMessage {
  type: "superseded";
  req_id: number;
}

export interface ErrorMessage {
  type: "error";
  req_id: number;
  message: string;
}

export type ServerMessage = FrameMessage | SupersededMessage | ErrorMessage;

export interface Meta {
  frame_count: number;
  fps: number;
  viewport: { hfov_deg: number; height: number; width: number };
  model_summary: Record<string, unknown>;
  checkpoint_digest: string;
  image_format: "png" | "jpeg";
}

function isRecord(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function isInt(v: unknown): v is number {
  return typeof v === "number" && Number.isInteger(v);
}

function isNum(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

export function isViewMessage(v: unknown): v is ViewMessage {
  return (
    isRecord(v) &&
    v.type === "view" &&
    isInt(v.t) &&
    isNum(v.theta_deg) &&
    isNum(v.phi_deg) &&
    isInt(v.req_id)
  );
}

export function isServerMessage(v: unknown): v is ServerMessage {
  if (!isRecord(v)) return false;
  switch (v.type) {
    case "frame":
      return (
        isInt(v.req_id) &&
        isNum(v.decode_ms) &&
        typeof v.image_b64 === "string" &&
        (v.format === "png" || v.format === "jpeg")
      );
    case "superseded":
      return isInt(v.req_id);
    case "error":
      return isInt(v.req_id) && typeof v.message === "string";
    default:
      return false;
  }
}

export function parseServerMessage(text: string): ServerMessage {
  let value: unknown;
  try {
    value = JSON.parse(text);
  } catch {
    throw new Error(`server sent non-JSON frame: ${text.slice(0, 80)}`);
  }
  if (!isServerMessage(value)) {
    throw new Error(`unrecognized server message: ${text.slice(0, 120)}`);
  }
  return value;
}

export function encodeViewMessage(msg: ViewMessage): string {
  return JSON.stringify({
    type: msg.type,
    t: msg.t,
    theta_deg: msg.theta_deg,
    phi_deg: msg.phi_deg,
    req_id: msg.req_id,
  });
}
