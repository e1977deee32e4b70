import { consumeStream, createSession, postEvent } from "./client";
import { SurfaceMapping } from "./coords";
import { PointerTracker } from "./pointers";
import { decodeImage, hotspotMm, renderToRgba } from "./render";
import { ActionIndicator, LiveState } from "./state";
import { GESTURE_LABELS, StreamMessage, TouchEventMessage } from "./types";

const BASE = (window as any).TACTILE_EIT_BASE
  ?? `http://${location.hostname}:8787`;

const surface = document.getElementById("surface") as HTMLCanvasElement;
const heatmap = document.getElementById("heatmap") as HTMLCanvasElement;
const bars = document.getElementById("gesture-bars") as HTMLDivElement;
const actionEl = document.getElementById("action") as HTMLDivElement;
const statusEl = document.getElementById("status") as HTMLDivElement;

const state = new LiveState();
const indicator = new ActionIndicator();
let pendingEvents: TouchEventMessage[] = [];
let droppedSince = 0;

function setStatus(text: string, ok: boolean) {
  statusEl.textContent = text;
  statusEl.className = ok ? "status ok" : "status bad";
}

async function main() {
  setStatus("connecting ...", false);
  const info = await createSession(BASE, {});
  const mapping = new SurfaceMapping(surface.width, surface.height,
                                     info.geometry.side_length);
  const tracker = new PointerTracker(mapping, info.geometry.layer_thickness);
  setStatus(`session #${info.session_id} @ ${info.tick_hz} Hz`
    + (info.classifier ? " with classifier" : ""), true);

  const send = (msg: TouchEventMessage | null) => {
    if (!msg) return;
    postEvent(BASE, info.session_id, msg).catch(() => {
      // buffer briefly on failure; stale events are dropped after 2 s
      pendingEvents.push(msg);
      const cutoff = performance.now();
      setTimeout(() => {
        if (performance.now() - cutoff > 2000) pendingEvents = [];
      }, 2100);
      setStatus("event delivery failing", false);
    });
  };

  surface.addEventListener("pointerdown", (e) => {
    surface.setPointerCapture(e.pointerId);
    const rect = surface.getBoundingClientRect();
    send(tracker.down(e.pointerId, e.clientX - rect.left, e.clientY - rect.top,
                      e.pressure > 0 ? e.pressure : null));
  });
  surface.addEventListener("pointermove", (e) => {
    const rect = surface.getBoundingClientRect();
    send(tracker.move(e.pointerId, e.clientX - rect.left, e.clientY - rect.top,
                      e.pressure > 0 ? e.pressure : null));
  });
  for (const kind of ["pointerup", "pointercancel"] as const) {
    surface.addEventListener(kind, (e) => send(tracker.up(e.pointerId)));
  }

  const heatCtx = heatmap.getContext("2d")!;
  const gestureRows = GESTURE_LABELS.map((label) => {
    const row = document.createElement("div");
    row.className = "bar-row";
    const name = document.createElement("span");
    name.textContent = label;
    const track = document.createElement("div");
    track.className = "bar-track";
    const fill = document.createElement("div");
    fill.className = "bar-fill";
    track.appendChild(fill);
    row.appendChild(name);
    row.appendChild(track);
    bars.appendChild(row);
    return fill;
  });

  const render = (msg: StreamMessage) => {
    if (!state.apply(msg)) return; // out-of-order: never rendered
    const img = decodeImage(msg.img);
    const rgba = renderToRgba(img, heatmap.width, heatmap.height);
    heatCtx.putImageData(
      new ImageData(rgba, heatmap.width, heatmap.height), 0, 0);
    const [hx, hy] = hotspotMm(img, mapping.sideLength);
    const probs = msg.gesture.probs;
    gestureRows.forEach((fill, i) => {
      fill.style.width = `${probs ? Math.round(100 * probs[i]) : 0}%`;
    });
    if (indicator.update(msg.action.kind)) {
      actionEl.textContent = msg.action.kind;
      actionEl.dataset.kind = msg.action.kind;
    }
    statusEl.textContent = `tick ${msg.seq} | gesture ${msg.gesture.label} `
      + `| hotspot (${hx.toFixed(0)}, ${hy.toFixed(0)}) mm`;
  };

  for (;;) {
    try {
      state.connected = true;
      await consumeStream(BASE, info.session_id, render);
    } catch {
      state.connected = false;
      setStatus("stream lost, retrying ...", false);
      await new Promise((r) => setTimeout(r, 1000));
    }
  }
}

main().catch((err) => setStatus(String(err), false));
