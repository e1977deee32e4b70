import { describe, expect, it } from "vitest";
import { SurfaceMapping } from "../src/coords";
import { PointerTracker, holdDepthMm } from "../src/pointers";

function makeTracker() {
  let now = 0;
  const mapping = new SurfaceMapping(400, 400, 100);
  const tracker = new PointerTracker(mapping, 3.0, () => now);
  return { tracker, advance: (ms: number) => { now += ms; } };
}

describe("holdDepthMm", () => {
  it("ramps from 1 mm and caps below the layer thickness", () => {
    expect(holdDepthMm(0, 3.0)).toBe(1.0);
    expect(holdDepthMm(500, 3.0)).toBeCloseTo(2.5);
    expect(holdDepthMm(1000, 3.0)).toBeCloseTo(2.7); // 0.9 * t cap
    expect(holdDepthMm(5000, 3.0)).toBeCloseTo(2.7);
    expect(holdDepthMm(1000, 5.0)).toBeCloseTo(4.0); // absolute 4 mm cap
  });
});

describe("PointerTracker", () => {
  it("click-release produces one down and one up with matching id", () => {
    const { tracker } = makeTracker();
    const down = tracker.down(7, 100, 100);
    const up = tracker.up(7);
    expect(down.event).toBe("down");
    expect(up?.event).toBe("up");
    expect(up?.id).toBe(down.id);
    expect(tracker.activeCount()).toBe(0);
  });

  it("drag across the surface yields monotone mm positions", () => {
    const { tracker, advance } = makeTracker();
    tracker.down(1, 40, 200);
    const xs: number[] = [];
    for (let px = 60; px <= 360; px += 20) {
      advance(50);
      const msg = tracker.move(1, px, 200)!;
      xs.push(msg.position![0]);
    }
    for (let i = 1; i < xs.length; i++) expect(xs[i]).toBeGreaterThan(xs[i - 1]);
  });

  it("two-finger pinch drives two concurrent converging ids", () => {
    const { tracker, advance } = makeTracker();
    const a = tracker.down(1, 80, 200);
    const b = tracker.down(2, 320, 200);
    expect(a.id).not.toBe(b.id);
    expect(tracker.activeCount()).toBe(2);
    let gap = Infinity;
    for (let step = 1; step <= 5; step++) {
      advance(80);
      const ma = tracker.move(1, 80 + step * 20, 200)!;
      const mb = tracker.move(2, 320 - step * 20, 200)!;
      const newGap = Math.abs(mb.position![0] - ma.position![0]);
      expect(newGap).toBeLessThan(gap);
      gap = newGap;
    }
  });

  it("hold time deepens the press on move", () => {
    const { tracker, advance } = makeTracker();
    const d0 = tracker.down(1, 200, 200);
    advance(900);
    const d1 = tracker.move(1, 201, 200)!;
    expect(d1.depth!).toBeGreaterThan(d0.depth!);
  });

  it("ignores move/up for unknown pointers", () => {
    const { tracker } = makeTracker();
    expect(tracker.move(99, 0, 0)).toBeNull();
    expect(tracker.up(99)).toBeNull();
  });
});
