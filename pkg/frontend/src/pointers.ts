import { SurfaceMapping } from "./coords";
import { TouchEventMessage } from "./types";

/** Hold-time depth proxy: ramps 1 mm -> depthCap over one second. */
export function holdDepthMm(heldMs: number, layerThickness: number): number {
  const cap = Math.min(4.0, 0.9 * layerThickness);
  const ramp = 1.0 + 3.0 * Math.min(heldMs, 1000) / 1000;
  return Math.min(ramp, cap);
}

interface ActivePointer {
  touchId: number;
  downAt: number;
  lastPos: [number, number];
  pressure: number | null;
}

/** Translates browser pointer events into service touch messages.
 *
 * Mice have no pressure channel, so press depth comes from the hold-time
 * ramp; pressure-capable pointers map their normalized pressure onto the
 * same depth range. Supports any number of concurrent pointers.
 */
export class PointerTracker {
  private active = new Map<number, ActivePointer>();
  private nextTouchId = 1;

  constructor(
    private mapping: SurfaceMapping,
    private layerThickness: number,
    private now: () => number = () => performance.now(),
  ) {}

  private depthFor(p: ActivePointer): number {
    if (p.pressure !== null && p.pressure > 0) {
      const cap = Math.min(4.0, 0.9 * this.layerThickness);
      return Math.max(0.5, p.pressure * cap);
    }
    return holdDepthMm(this.now() - p.downAt, this.layerThickness);
  }

  down(pointerId: number, px: number, py: number,
       pressure: number | null = null): TouchEventMessage {
    const pos = this.mapping.pxToMm(px, py);
    const pointer: ActivePointer = {
      touchId: this.nextTouchId++,
      downAt: this.now(),
      lastPos: pos,
      pressure,
    };
    this.active.set(pointerId, pointer);
    return {
      id: pointer.touchId,
      event: "down",
      position: pos,
      depth: this.depthFor(pointer),
    };
  }

  move(pointerId: number, px: number, py: number,
       pressure: number | null = null): TouchEventMessage | null {
    const pointer = this.active.get(pointerId);
    if (!pointer) return null;
    if (pressure !== null) pointer.pressure = pressure;
    pointer.lastPos = this.mapping.pxToMm(px, py);
    return {
      id: pointer.touchId,
      event: "move",
      position: pointer.lastPos,
      depth: this.depthFor(pointer),
    };
  }

  up(pointerId: number): TouchEventMessage | null {
    const pointer = this.active.get(pointerId);
    if (!pointer) return null;
    this.active.delete(pointerId);
    return { id: pointer.touchId, event: "up" };
  }

  activeCount(): number {
    return this.active.size;
  }
}
