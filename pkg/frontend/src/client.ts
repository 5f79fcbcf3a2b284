// WebSocket plumbing: connects, feeds parsed messages into the state
// dispatcher, reports connection status. The WebSocket constructor is
// injectable so tests can run under Node.

import { Meta, ViewMessage, encodeViewMessage, parseServerMessage } from "./protocol.js";
import { ViewerState } from "./state.js";

type WebSocketLike = {
  send(data: string): void;
  close(): void;
  addEventListener(type: string, listener: (ev: any) => void): void;
};

export type WebSocketCtor = new (url: string) => WebSocketLike;

export interface ClientOptions {
  host: string;
  port: number;
  webSocket?: WebSocketCtor;
}

export function httpBase(opts: ClientOptions): string {
  return `http://${opts.host}:${opts.port}`;
}

export async function fetchMeta(opts: ClientOptions): Promise<Meta> {
  const res = await fetch(`${httpBase(opts)}/meta`);
  if (!res.ok) {
    throw new Error(`GET /meta failed: ${res.status}`);
  }
  return (await res.json()) as Meta;
}

export class ViewerClient {
  private ws: WebSocketLike | null = null;
  private readonly ctor: WebSocketCtor;
  private queue: ViewMessage[] = [];
  private open = false;

  constructor(
    private readonly opts: ClientOptions,
    private readonly state: ViewerState,
  ) {
    const ctor = opts.webSocket ?? (globalThis as any).WebSocket;
    if (!ctor) {
      throw new Error("no WebSocket implementation available");
    }
    this.ctor = ctor;
  }

  /** The transport the ViewerState sends through (input events never block). */
  send = (msg: ViewMessage): void => {
    if (this.open && this.ws) {
      this.ws.send(encodeViewMessage(msg));
    } else {
      this.queue.push(msg);
    }
  };

  connect(): void {
    const ws = new this.ctor(`ws://${this.opts.host}:${this.opts.port}/ws`);
    this.ws = ws;
    this.state.setConnection("connecting");
    ws.addEventListener("open", () => {
      this.open = true;
      this.state.setConnection("open");
      // only the newest queued request matters; the server would coalesce anyway
      const pending = this.queue.pop();
      this.queue = [];
      if (pending) ws.send(encodeViewMessage(pending));
    });
    ws.addEventListener("message", (ev: MessageEvent) => {
      let msg;
      try {
        msg = parseServerMessage(String(ev.data));
      } catch (err) {
        console.warn(String(err));
        return;
      }
      this.state.handleServerMessage(msg);
    });
    ws.addEventListener("close", () => {
      this.open = false;
      this.state.setConnection("closed");
    });
    ws.addEventListener("error", () => {
      this.open = false;
    });
  }

  close(): void {
    this.ws?.close();
  }
}
