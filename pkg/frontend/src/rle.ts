/**
 * Run-length encoded binary masks as they travel on the wire.
 *
 * Runs alternate unset/set in row-major order, always starting with an
 * unset run (possibly zero-length). The studio never edits masks locally:
 * decoded bits are used for rendering only, and commits send back the
 * exact RLE objects last received from the service.
 */

export interface RleMask {
  h: number;
  w: number;
  runs: number[];
}

/** Decode to a flat row-major bit buffer (1 = selected). */
export function decodeRle(rle: RleMask): Uint8Array {
  const { h, w, runs } = rle;
  if (!Number.isInteger(h) || !Number.isInteger(w) || h < 1 || w < 1) {
    throw new Error(`bad mask dims ${h}x${w}`);
  }
  const total = h * w;
  const bits = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const run of runs) {
    if (!Number.isInteger(run) || run < 0) {
      throw new Error(`runs must be non-negative integers, got ${run}`);
    }
    if (value === 1) bits.fill(1, pos, pos + run);
    pos += run;
    value ^= 1;
  }
  if (pos !== total) {
    throw new Error(`runs cover ${pos} pixels, mask is ${h}x${w} = ${total}`);
  }
  return bits;
}

export function countSet(rle: RleMask): number {
  // set runs sit at odd positions
  let n = 0;
  for (let i = 1; i < rle.runs.length; i += 2) n += rle.runs[i];
  return n;
}

export function isFull(rle: RleMask): boolean {
  return countSet(rle) === rle.h * rle.w;
}

export function isEmpty(rle: RleMask): boolean {
  return countSet(rle) === 0;
}
