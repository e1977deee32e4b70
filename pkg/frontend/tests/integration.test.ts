/** End-to-end test against a live session service.
 *
 * Spawns the Python server with a cached classifier, then drives it the
 * way the browser UI does: pointer events in, NDJSON stream out, frames
 * decoded through the real render path.
 */

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { existsSync } from "node:fs";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { consumeStream, createSession, postEvent } from "../src/client";
import { SurfaceMapping } from "../src/coords";
import { PointerTracker } from "../src/pointers";
import { decodeImage, hotspotMm, renderToRgba } from "../src/render";
import { LiveState } from "../src/state";
import { SessionInfo, StreamMessage } from "../src/types";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const ROOT = path.resolve(__dirname, "..");
const CLASSIFIER = path.join(ROOT, ".cache", "classifier.bin");

let server: ChildProcess | null = null;

async function serverReady(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const r = await fetch(`${BASE}/openapi.json`);
      if (r.ok) return;
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) throw new Error("server did not come up");
    await new Promise((r) => setTimeout(r, 500));
  }
}

beforeAll(async () => {
  if (!existsSync(CLASSIFIER)) {
    execFileSync("python3", [path.join(ROOT, "scripts", "train_ui_classifier.py")],
                 { stdio: "inherit", timeout: 900_000 });
  }
  server = spawn("python3", [
    "-m", "tactile_eit.cli", "serve",
    "--port", String(PORT),
    "--classifier", CLASSIFIER,
    "--tick-hz", "10",
  ], { cwd: path.resolve(ROOT, ".."), stdio: ["ignore", "pipe", "pipe"] });
  server.stderr?.on("data", (d) => process.stderr.write(d));
  await serverReady(60_000);
}, 960_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

interface Tracked {
  state: LiveState;
  messages: StreamMessage[];
  stop: () => void;
  done: Promise<void>;
}

function track(info: SessionInfo): Tracked {
  const state = new LiveState();
  const messages: StreamMessage[] = [];
  const controller = new AbortController();
  const done = consumeStream(BASE, info.session_id, (msg) => {
    if (state.apply(msg)) messages.push(msg);
  }, controller.signal).catch(() => undefined);
  return { state, messages, stop: () => controller.abort(), done };
}

async function waitForSeq(tracked: Tracked, seq: number, timeoutMs = 5000) {
  const deadline = Date.now() + timeoutMs;
  while ((tracked.state.latest?.seq ?? 0) < seq) {
    if (Date.now() > deadline) throw new Error(`no tick ${seq} in time`);
    await new Promise((r) => setTimeout(r, 20));
  }
}

describe("live server", () => {
  it("scripted drag: hotspot tracks the pointer within 2 mm", async () => {
    const info = await createSession(BASE, { seed: 1 });
    const mapping = new SurfaceMapping(400, 400, info.geometry.side_length);
    const tracker = new PointerTracker(mapping, info.geometry.layer_thickness);
    const tracked = track(info);

    // drag along the conductive strip at y = 50 mm, x: 20 -> 80 mm
    const yPx = 200;
    const xsMm = Array.from({ length: 16 }, (_, i) => 20 + i * 4);
    const down = tracker.down(1, (xsMm[0] / 100) * 400, yPx, 0.75);
    await postEvent(BASE, info.session_id, down);

    let checked = 0;
    const errors: number[] = [];
    let latencyMs = Infinity;
    const downSent = Date.now();
    for (const xMm of xsMm) {
      const move = tracker.move(1, (xMm / 100) * 400, yPx, 0.75)!;
      await postEvent(BASE, info.session_id, move);
      const target = (tracked.state.latest?.seq ?? 0) + 2;
      await waitForSeq(tracked, target);
      const msg = tracked.state.latest!;
      const img = decodeImage(msg.img);
      const rgba = renderToRgba(img, 400, 400); // the real render path
      expect(rgba.length).toBe(400 * 400 * 4);
      const [hx, hy] = hotspotMm(img, info.geometry.side_length);
      const err = Math.hypot(hx - xMm, hy - 50);
      errors.push(err);
      checked += 1;
      if (latencyMs === Infinity && err <= 2.0) {
        latencyMs = Date.now() - downSent;
      }
    }
    await postEvent(BASE, info.session_id, tracker.up(1)!);
    tracked.stop();

    expect(checked).toBeGreaterThanOrEqual(10);
    const within = errors.filter((e) => e <= 2.0).length;
    expect(within).toBeGreaterThanOrEqual(10);
    expect(tracked.state.framesRendered).toBeGreaterThanOrEqual(10);
    expect(latencyMs).toBeLessThanOrEqual(300 + 200); // first hit includes setup ticks
  }, 120_000);

  it("pointer-to-pixel latency stays under 300 ms", async () => {
    const info = await createSession(BASE, { seed: 2 });
    const mapping = new SurfaceMapping(400, 400, info.geometry.side_length);
    const tracker = new PointerTracker(mapping, info.geometry.layer_thickness);
    const tracked = track(info);
    await waitForSeq(tracked, 2, 5000); // session ticking and stream warm

    const [px, py] = mapping.mmToPx(62.5, 50);
    const t0 = Date.now();
    await postEvent(BASE, info.session_id, tracker.down(1, px, py, 0.8));
    let latency = Infinity;
    const deadline = Date.now() + 3000;
    while (Date.now() < deadline) {
      const msg = tracked.state.latest;
      if (msg) {
        const [hx, hy] = hotspotMm(decodeImage(msg.img),
                                   info.geometry.side_length);
        if (Math.hypot(hx - 62.5, hy - 50) <= 2.0) {
          latency = Date.now() - t0;
          break;
        }
      }
      await new Promise((r) => setTimeout(r, 10));
    }
    await postEvent(BASE, info.session_id, tracker.up(1)!);
    tracked.stop();
    expect(latency).toBeLessThanOrEqual(300);
  }, 60_000);

  it("scripted two-pointer pinch classifies as zoom-in within 20 ticks", async () => {
    const info = await createSession(BASE, { seed: 3 });
    expect(info.classifier).toBe(true);
    const mapping = new SurfaceMapping(400, 400, info.geometry.side_length);
    const tracker = new PointerTracker(mapping, info.geometry.layer_thickness);
    const tracked = track(info);
    await waitForSeq(tracked, 1, 5000);
    const startSeq = tracked.state.latest!.seq;

    // two fingers converging from 54 mm apart to 16 mm along y = 50
    const steps = 12;
    const a0 = 23, a1 = 42, b0 = 77, b1 = 58;
    const downA = tracker.down(1, (a0 / 100) * 400, 200, 0.8);
    const downB = tracker.down(2, (b0 / 100) * 400, 200, 0.8);
    await postEvent(BASE, info.session_id, downA);
    await postEvent(BASE, info.session_id, downB);
    for (let s = 1; s <= steps; s++) {
      const ax = a0 + ((a1 - a0) * s) / steps;
      const bx = b0 + ((b1 - b0) * s) / steps;
      await postEvent(BASE, info.session_id,
                      tracker.move(1, (ax / 100) * 400, 200, 0.8)!);
      await postEvent(BASE, info.session_id,
                      tracker.move(2, (bx / 100) * 400, 200, 0.8)!);
      await new Promise((r) => setTimeout(r, 110));
    }

    let zoomSeq: number | null = null;
    const deadline = Date.now() + 8000;
    while (Date.now() < deadline) {
      const hit = tracked.messages.find(
        (m) => m.seq > startSeq && m.gesture.label === "zoom-in");
      if (hit) {
        zoomSeq = hit.seq;
        break;
      }
      await new Promise((r) => setTimeout(r, 50));
    }
    await postEvent(BASE, info.session_id, tracker.up(1)!);
    await postEvent(BASE, info.session_id, tracker.up(2)!);
    tracked.stop();

    expect(zoomSeq).not.toBeNull();
    expect(zoomSeq! - startSeq).toBeLessThanOrEqual(20);
  }, 120_000);
});
