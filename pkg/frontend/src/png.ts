/**
 * Minimal PNG decoder for the result diff view: 8-bit truecolor (RGB or
 * RGBA), non-interlaced, any scanline filter. This covers everything the
 * service emits; anything else is rejected loudly.
 *
 * Runs in both the browser and node via DecompressionStream.
 */

const PNG_SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

export interface DecodedPng {
  width: number;
  height: number;
  channels: 3 | 4;
  /** Row-major, channel-interleaved. */
  pixels: Uint8Array;
}

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  const stream = new Blob([data as BlobPart])
    .stream()
    .pipeThrough(new DecompressionStream("deflate"));
  return new Uint8Array(await new Response(stream).arrayBuffer());
}

function u32(bytes: Uint8Array, off: number): number {
  return ((bytes[off] << 24) | (bytes[off + 1] << 16) | (bytes[off + 2] << 8) | bytes[off + 3]) >>> 0;
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

export async function decodePng(bytes: Uint8Array): Promise<DecodedPng> {
  if (bytes.length < 8 || PNG_SIGNATURE.some((v, i) => bytes[i] !== v)) {
    throw new Error("not a PNG file");
  }

  let width = 0;
  let height = 0;
  let channels: 3 | 4 = 3;
  const idat: Uint8Array[] = [];
  let off = 8;
  while (off + 8 <= bytes.length) {
    const length = u32(bytes, off);
    const type = String.fromCharCode(bytes[off + 4], bytes[off + 5], bytes[off + 6], bytes[off + 7]);
    const data = bytes.subarray(off + 8, off + 8 + length);
    if (type === "IHDR") {
      width = u32(data, 0);
      height = u32(data, 4);
      const bitDepth = data[8];
      const colorType = data[9];
      const interlace = data[12];
      if (bitDepth !== 8) throw new Error(`unsupported bit depth ${bitDepth}`);
      if (colorType === 2) channels = 3;
      else if (colorType === 6) channels = 4;
      else throw new Error(`unsupported color type ${colorType}`);
      if (interlace !== 0) throw new Error("interlaced PNG not supported");
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    off += 12 + length; // length + type + data + crc
  }
  if (width === 0 || height === 0) throw new Error("missing IHDR");
  if (idat.length === 0) throw new Error("missing IDAT");

  const compressed = new Uint8Array(idat.reduce((n, c) => n + c.length, 0));
  let w = 0;
  for (const chunk of idat) {
    compressed.set(chunk, w);
    w += chunk.length;
  }
  const raw = await inflate(compressed);

  const stride = width * channels;
  if (raw.length !== (stride + 1) * height) {
    throw new Error(`decompressed size ${raw.length} does not match ${width}x${height}`);
  }

  const pixels = new Uint8Array(stride * height);
  const bpp = channels;
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const src = (stride + 1) * y + 1;
    const dst = stride * y;
    for (let x = 0; x < stride; x++) {
      const value = raw[src + x];
      const left = x >= bpp ? pixels[dst + x - bpp] : 0;
      const up = y > 0 ? pixels[dst + x - stride] : 0;
      const upLeft = y > 0 && x >= bpp ? pixels[dst + x - stride - bpp] : 0;
      let out: number;
      switch (filter) {
        case 0:
          out = value;
          break;
        case 1:
          out = value + left;
          break;
        case 2:
          out = value + up;
          break;
        case 3:
          out = value + ((left + up) >> 1);
          break;
        case 4:
          out = value + paeth(left, up, upLeft);
          break;
        default:
          throw new Error(`unknown scanline filter ${filter}`);
      }
      pixels[dst + x] = out & 0xff;
    }
  }
  return { width, height, channels, pixels };
}

/**
 * Count pixels whose RGB differs between two PNGs. The diff view reports
 * this number; zero means visually identical results.
 */
export async function diffPixelCount(a: Uint8Array, b: Uint8Array): Promise<number> {
  const [pa, pb] = await Promise.all([decodePng(a), decodePng(b)]);
  if (pa.width !== pb.width || pa.height !== pb.height) {
    throw new Error(
      `size mismatch: ${pa.width}x${pa.height} vs ${pb.width}x${pb.height}`,
    );
  }
  let differing = 0;
  const n = pa.width * pa.height;
  for (let i = 0; i < n; i++) {
    const oa = i * pa.channels;
    const ob = i * pb.channels;
    if (
      pa.pixels[oa] !== pb.pixels[ob] ||
      pa.pixels[oa + 1] !== pb.pixels[ob + 1] ||
      pa.pixels[oa + 2] !== pb.pixels[ob + 2]
    ) {
      differing++;
    }
  }
  return differing;
}
