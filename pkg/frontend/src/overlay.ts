/**
 * Mask overlay rendering. Committed pairs get stable per-index colors; the
 * active (uncommitted) proposal renders in a neutral highlight.
 */

import type { RleMask } from "./rle.js";
import { decodeRle } from "./rle.js";

export interface Rgba {
  r: number;
  g: number;
  b: number;
  a: number; // 0..255
}

const PAIR_COLORS: Rgba[] = [
  { r: 251, g: 146, b: 60, a: 110 }, // orange
  { r: 59, g: 130, b: 246, a: 110 }, // blue
  { r: 34, g: 197, b: 94, a: 110 }, // green
  { r: 168, g: 85, b: 247, a: 110 }, // purple
  { r: 236, g: 72, b: 153, a: 110 }, // pink
  { r: 6, g: 182, b: 212, a: 110 }, // cyan
];

export const ACTIVE_COLOR: Rgba = { r: 255, g: 255, b: 255, a: 90 };

/** Same index, same color, forever — chips and overlays must agree. */
export function pairColor(index: number): Rgba {
  return PAIR_COLORS[index % PAIR_COLORS.length];
}

export function pairColorCss(index: number): string {
  const c = pairColor(index);
  return `rgb(${c.r}, ${c.g}, ${c.b})`;
}

/**
 * Rasterize a wire mask into RGBA bytes for an ImageData canvas layer.
 * Unselected pixels stay fully transparent.
 */
export function maskToRgba(rle: RleMask, color: Rgba): Uint8ClampedArray {
  const bits = decodeRle(rle);
  const out = new Uint8ClampedArray(rle.h * rle.w * 4);
  for (let i = 0; i < bits.length; i++) {
    if (bits[i]) {
      const o = i * 4;
      out[o] = color.r;
      out[o + 1] = color.g;
      out[o + 2] = color.b;
      out[o + 3] = color.a;
    }
  }
  return out;
}
