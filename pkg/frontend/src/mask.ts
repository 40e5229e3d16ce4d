/**
 * Client-side polygon mask rasterization. The service expects a PNG whose
 * first channel is >0 inside the editable region, exactly the image size.
 */
import { grayToPng } from "./png.js";

export interface Point {
  x: number;
  y: number;
}

/**
 * Scanline fill with the even-odd rule, sampling pixel centers. A pixel is
 * inside when its center (x+0.5, y+0.5) is inside the polygon, which keeps
 * the round trip polygon -> mask -> overlay within one pixel.
 */
export function rasterizePolygon(polygon: Point[], width: number, height: number): Uint8Array {
  const mask = new Uint8Array(width * height);
  if (polygon.length < 3) return mask;

  for (let y = 0; y < height; y++) {
    const cy = y + 0.5;
    const xs: number[] = [];
    for (let i = 0; i < polygon.length; i++) {
      const a = polygon[i];
      const b = polygon[(i + 1) % polygon.length];
      if (a.y <= cy === b.y <= cy) continue; // edge does not cross this row
      xs.push(a.x + ((cy - a.y) / (b.y - a.y)) * (b.x - a.x));
    }
    xs.sort((u, v) => u - v);
    for (let k = 0; k + 1 < xs.length; k += 2) {
      const start = Math.max(0, Math.ceil(xs[k] - 0.5));
      const stop = Math.min(width - 1, Math.floor(xs[k + 1] - 0.5));
      for (let x = start; x <= stop; x++) mask[y * width + x] = 255;
    }
  }
  return mask;
}

export function maskToPng(polygon: Point[], width: number, height: number): Uint8Array {
  return grayToPng(rasterizePolygon(polygon, width, height), width, height);
}

/** Reference test for a single point, used by the overlay and by tests. */
export function pointInPolygon(polygon: Point[], x: number, y: number): boolean {
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const a = polygon[i];
    const b = polygon[j];
    if (a.y <= y !== b.y <= y && x < a.x + ((y - a.y) / (b.y - a.y)) * (b.x - a.x)) {
      inside = !inside;
    }
  }
  return inside;
}
