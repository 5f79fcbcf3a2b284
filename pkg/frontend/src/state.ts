// Viewer state machine. All navigation and frame handling goes through this
// class so it can be driven headlessly in tests; rendering happens through
// the FrameSink interface, never directly.

import {
  ErrorMessage,
  FrameMessage,
  ServerMessage,
  ViewMessage,
} from "./protocol.js";

export function wrapThetaDeg(deg: number): number {
  let w = ((deg + 180) % 360 + 360) % 360 - 180;
  // -180 is the canonical representation of the seam, +180 is not in range
  return w === 180 ? -180 : w;
}

export function clampPhiDeg(deg: number): number {
  return Math.min(90, Math.max(-90, deg));
}

export interface FrameSink {
  drawFrame(msg: FrameMessage): void;
  showStatus(status: ConnectionStatus): void;
  updateHud(hud: HudStats): void;
}

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface HudStats {
  roundTripMs: number | null;
  decodeMs: number | null;
  effectiveFps: number;
  supersededCount: number;
  errorCount: number;
  lastError: string | null;
}

export interface ViewerOptions {
  send: (msg: ViewMessage) => void;
  sink: FrameSink;
  sensitivity?: number; // degrees per pixel
  playbackFps?: number;
  now?: () => number; // injectable clock (ms)
}

const FPS_WINDOW_MS = 2000;

export class ViewerState {
  t = 0;
  thetaDeg = 0;
  phiDeg = 0;
  playing = false;
  playbackFps: number;
  sensitivity: number;
  frameCount = 0;
  connection: ConnectionStatus = "connecting";

  private lastReqId = 0;
  private lastDrawnReqId = 0;
  private sendTimes = new Map<number, number>();
  private frameTimes: number[] = [];
  private hud: HudStats = {
    roundTripMs: null,
    decodeMs: null,
    effectiveFps: 0,
    supersededCount: 0,
    errorCount: 0,
    lastError: null,
  };
  private readonly send: (msg: ViewMessage) => void;
  private readonly sink: FrameSink;
  private readonly now: () => number;

  constructor(opts: ViewerOptions) {
    this.send = opts.send;
    this.sink = opts.sink;
    this.sensitivity = opts.sensitivity ?? 0.15;
    this.playbackFps = opts.playbackFps ?? 8;
    this.now = opts.now ?? (() => Date.now());
  }

  get currentReqId(): number {
    return this.lastReqId;
  }

  setFrameCount(count: number): void {
    this.frameCount = count;
    if (this.t >= count) this.t = 0;
  }

  setConnection(status: ConnectionStatus): void {
    this.connection = status;
    if (status !== "open") this.playing = false; // pause on disconnect
    this.sink.showStatus(status);
  }

  /** Issue a view request for the current (t, theta, phi). */
  requestView(): ViewMessage {
    const msg: ViewMessage = {
      type: "view",
      t: this.t,
      theta_deg: this.thetaDeg,
      phi_deg: this.phiDeg,
      req_id: ++this.lastReqId, // strictly increasing
    };
    this.sendTimes.set(msg.req_id, this.now());
    this.send(msg);
    return msg;
  }

  /** Pointer drag: horizontal pans longitude (wraps), vertical tilts latitude (clamps). */
  dragToView(deltaXPx: number, deltaYPx: number): ViewMessage {
    this.thetaDeg = wrapThetaDeg(this.thetaDeg + deltaXPx * this.sensitivity);
    this.phiDeg = clampPhiDeg(this.phiDeg - deltaYPx * this.sensitivity);
    return this.requestView();
  }

  /** Scrub directly to a frame index. */
  seek(t: number): ViewMessage {
    this.t = Math.min(Math.max(t, 0), Math.max(this.frameCount - 1, 0));
    return this.requestView();
  }

  /** Advance playback by one frame, looping at frame_count. */
  playbackTick(): ViewMessage | null {
    if (!this.playing || this.connection !== "open" || this.frameCount === 0) {
      return null;
    }
    this.t = (this.t + 1) % this.frameCount;
    return this.requestView();
  }

  handleServerMessage(msg: ServerMessage): void {
    switch (msg.type) {
      case "frame":
        this.handleFrame(msg);
        break;
      case "superseded":
        this.hud.supersededCount += 1;
        this.sendTimes.delete(msg.req_id);
        this.pushHud();
        break;
      case "error":
        this.handleError(msg);
        break;
    }
  }

  private handleFrame(msg: FrameMessage): void {
    if (msg.req_id < this.lastDrawnReqId) {
      // stale: a newer frame is already on screen
      this.sendTimes.delete(msg.req_id);
      return;
    }
    this.lastDrawnReqId = msg.req_id;
    const sent = this.sendTimes.get(msg.req_id);
    const nowMs = this.now();
    this.sendTimes.delete(msg.req_id);
    this.hud.roundTripMs = sent === undefined ? null : nowMs - sent;
    this.hud.decodeMs = msg.decode_ms;
    this.frameTimes.push(nowMs);
    const cutoff = nowMs - FPS_WINDOW_MS;
    while (this.frameTimes.length && this.frameTimes[0] < cutoff) {
      this.frameTimes.shift();
    }
    this.hud.effectiveFps = (this.frameTimes.length * 1000) / FPS_WINDOW_MS;
    this.sink.drawFrame(msg);
    this.pushHud();
  }

  private handleError(msg: ErrorMessage): void {
    this.hud.errorCount += 1;
    this.hud.lastError = msg.message;
    this.sendTimes.delete(msg.req_id);
    this.pushHud();
  }

  get lastDrawn(): number {
    return this.lastDrawnReqId;
  }

  get hudStats(): HudStats {
    return { ...this.hud };
  }

  private pushHud(): void {
    this.sink.updateHud({ ...this.hud });
  }
}
