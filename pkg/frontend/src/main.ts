// Browser bootstrap: canvas rendering, pointer drag, timeline, playback, HUD.
// Connection target comes from the URL query (?host=…&port=…), defaulting to
// the page's own origin.

import { ViewerClient, fetchMeta } from "./client.js";
import { FrameMessage } from "./protocol.js";
import { ConnectionStatus, FrameSink, HudStats, ViewerState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class CanvasSink implements FrameSink {
  private ctx: CanvasRenderingContext2D;

  constructor(
    private canvas: HTMLCanvasElement,
    private hudNode: HTMLElement,
    private banner: HTMLElement,
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas unavailable");
    this.ctx = ctx;
  }

  drawFrame(msg: FrameMessage): void {
    const img = new Image();
    img.onload = () => {
      this.canvas.width = img.width;
      this.canvas.height = img.height;
      this.ctx.drawImage(img, 0, 0);
    };
    const mime = msg.format === "png" ? "image/png" : "image/jpeg";
    img.src = `data:${mime};base64,${msg.image_b64}`;
  }

  showStatus(status: ConnectionStatus): void {
    this.banner.textContent =
      status === "open" ? "" : status === "connecting" ? "connecting…" : "disconnected";
    this.banner.style.display = status === "open" ? "none" : "block";
  }

  updateHud(hud: HudStats): void {
    const rtt = hud.roundTripMs === null ? "–" : hud.roundTripMs.toFixed(0);
    const dec = hud.decodeMs === null ? "–" : hud.decodeMs.toFixed(1);
    this.hudNode.textContent =
      `rtt ${rtt} ms · decode ${dec} ms · ${hud.effectiveFps.toFixed(1)} fps · ` +
      `superseded ${hud.supersededCount}` +
      (hud.lastError ? ` · error: ${hud.lastError}` : "");
  }
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const host = params.get("host") ?? window.location.hostname ?? "127.0.0.1";
  const port = Number(params.get("port") ?? window.location.port ?? "8360");

  const canvas = el<HTMLCanvasElement>("viewport");
  const sink = new CanvasSink(canvas, el("hud"), el("banner"));
  const timeline = el<HTMLInputElement>("timeline");
  const playButton = el<HTMLButtonElement>("play");
  const sensSlider = el<HTMLInputElement>("sensitivity");
  const posLabel = el("position");

  let client: ViewerClient;
  const state = new ViewerState({
    send: (msg) => client.send(msg),
    sink,
  });
  client = new ViewerClient({ host, port }, state);

  const showPosition = () => {
    posLabel.textContent =
      `t=${state.t} θ=${state.thetaDeg.toFixed(1)}° φ=${state.phiDeg.toFixed(1)}°`;
    timeline.value = String(state.t);
  };

  // pointer drag steers the view; input is never throttled client-side,
  // the server coalesces to the newest request
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    lastX = ev.clientX;
    lastY = ev.clientY;
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    state.dragToView(ev.clientX - lastX, ev.clientY - lastY);
    lastX = ev.clientX;
    lastY = ev.clientY;
    showPosition();
  });
  canvas.addEventListener("pointerup", (ev) => {
    dragging = false;
    canvas.releasePointerCapture(ev.pointerId);
  });

  timeline.addEventListener("input", () => {
    state.seek(Number(timeline.value));
    showPosition();
  });

  playButton.addEventListener("click", () => {
    state.playing = !state.playing;
    playButton.textContent = state.playing ? "pause" : "play";
  });

  sensSlider.addEventListener("input", () => {
    state.sensitivity = Number(sensSlider.value);
  });

  let playTimer: number | undefined;
  const schedulePlayback = () => {
    if (playTimer !== undefined) window.clearInterval(playTimer);
    playTimer = window.setInterval(() => {
      if (state.playbackTick()) showPosition();
    }, 1000 / state.playbackFps);
  };

  fetchMeta({ host, port })
    .then((meta) => {
      state.setFrameCount(meta.frame_count);
      state.playbackFps = meta.fps > 0 && meta.fps <= 60 ? meta.fps : 8;
      timeline.max = String(meta.frame_count - 1);
      client.connect();
      schedulePlayback();
      state.requestView();
      showPosition();
    })
    .catch((err) => {
      sink.showStatus("closed");
      el("banner").textContent = `service unreachable: ${err}`;
    });
}

main();
