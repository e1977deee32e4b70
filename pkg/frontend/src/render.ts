/** Pure rendering helpers: image decoding, colormap, upscale, hotspot. */

export const IMAGE_N = 48;

export function decodeImage(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const raw = atob(b64);
    const out = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}

// compact inferno-like ramp; stops interpolated linearly
const STOPS: [number, number, number][] = [
  [0, 0, 4],
  [40, 11, 84],
  [101, 21, 110],
  [159, 42, 99],
  [212, 72, 66],
  [245, 125, 21],
  [250, 193, 39],
  [252, 255, 164],
];

export function colormap(v: number): [number, number, number] {
  const t = Math.min(Math.max(v, 0), 1) * (STOPS.length - 1);
  const i = Math.min(Math.floor(t), STOPS.length - 2);
  const f = t - i;
  const a = STOPS[i];
  const b = STOPS[i + 1];
  return [
    Math.round(a[0] + f * (b[0] - a[0])),
    Math.round(a[1] + f * (b[1] - a[1])),
    Math.round(a[2] + f * (b[2] - a[2])),
  ];
}

/** Bilinear upscale of the 48x48 image to an RGBA buffer.
 *
 * Image row 0 is the sensor's y=0 edge, so rows are flipped for screen
 * orientation (canvas y grows downward).
 */
export function renderToRgba(img: Uint8Array, width: number, height: number) {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let py = 0; py < height; py++) {
    const sy = ((height - 1 - py) / (height - 1)) * (IMAGE_N - 1);
    const y0 = Math.min(Math.floor(sy), IMAGE_N - 2);
    const fy = sy - y0;
    for (let px = 0; px < width; px++) {
      const sx = (px / (width - 1)) * (IMAGE_N - 1);
      const x0 = Math.min(Math.floor(sx), IMAGE_N - 2);
      const fx = sx - x0;
      const v00 = img[y0 * IMAGE_N + x0];
      const v01 = img[y0 * IMAGE_N + x0 + 1];
      const v10 = img[(y0 + 1) * IMAGE_N + x0];
      const v11 = img[(y0 + 1) * IMAGE_N + x0 + 1];
      const v = (v00 * (1 - fx) + v01 * fx) * (1 - fy)
        + (v10 * (1 - fx) + v11 * fx) * fy;
      const [r, g, b] = colormap(v / 255);
      const o = (py * width + px) * 4;
      out[o] = r;
      out[o + 1] = g;
      out[o + 2] = b;
      out[o + 3] = 255;
    }
  }
  return out;
}

/** Touch hotspot in sensor millimetres.
 *
 * Intensity-weighted centroid of the half-peak mass around the brightest
 * pixel; the window spans a full lattice cell so the estimate does not
 * snap to strip crossings.
 */
export function hotspotMm(img: Uint8Array, sideLength: number,
                          windowHalf = 5): [number, number] {
  let best = -1;
  let bestIdx = 0;
  for (let i = 0; i < img.length; i++) {
    if (img[i] > best) {
      best = img[i];
      bestIdx = i;
    }
  }
  const row = Math.floor(bestIdx / IMAGE_N);
  const col = bestIdx % IMAGE_N;
  const threshold = 0.5 * best;
  let wSum = 0;
  let rSum = 0;
  let cSum = 0;
  for (let r = Math.max(0, row - windowHalf);
       r <= Math.min(IMAGE_N - 1, row + windowHalf); r++) {
    for (let c = Math.max(0, col - windowHalf);
         c <= Math.min(IMAGE_N - 1, col + windowHalf); c++) {
      const w = img[r * IMAGE_N + c] - threshold;
      if (w > 0) {
        wSum += w;
        rSum += w * r;
        cSum += w * c;
      }
    }
  }
  const delta = sideLength / IMAGE_N;
  if (wSum <= 0) {
    return [(col + 0.5) * delta, (row + 0.5) * delta];
  }
  return [(cSum / wSum + 0.5) * delta, (rSum / wSum + 0.5) * delta];
}

export function isUniform(img: Uint8Array): boolean {
  for (let i = 1; i < img.length; i++) {
    if (img[i] !== img[0]) return false;
  }
  return true;
}
