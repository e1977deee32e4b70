/** Mapping between canvas pixels and sensor millimetres.
 *
 * Canvas y grows downward, sensor y grows upward; the mapping flips the
 * vertical axis so the on-screen surface matches the physical layout.
 */
export class SurfaceMapping {
  constructor(
    readonly canvasWidth: number,
    readonly canvasHeight: number,
    readonly sideLength: number,
  ) {}

  pxToMm(px: number, py: number): [number, number] {
    const x = (px / this.canvasWidth) * this.sideLength;
    const y = (1 - py / this.canvasHeight) * this.sideLength;
    return [this.clamp(x), this.clamp(y)];
  }

  mmToPx(x: number, y: number): [number, number] {
    return [
      (x / this.sideLength) * this.canvasWidth,
      (1 - y / this.sideLength) * this.canvasHeight,
    ];
  }

  private clamp(v: number): number {
    return Math.min(Math.max(v, 0), this.sideLength);
  }
}
