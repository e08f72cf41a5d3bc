/** Pixel header codec: per-class counts carried as a strip of solid gray
 * blocks across the top of a frame.
 *
 * One base-8 digit per block, gray level 16 + 32*digit. Blocks are 16x16
 * (8x8 for frames narrower than 304px) and aligned to the JPEG 8x8 DCT
 * grid, so a lossy round trip moves interior pixels a few gray levels at
 * most while digits sit 32 levels apart. Layout: 3 magic digits, 3 digits
 * per vehicle class (base 8, most significant first, canonical order),
 * then one checksum digit (payload digit sum mod 8).
 */

import { Counts, VEHICLE_CLASSES, zeroCounts } from "./counts";

const MAGIC = [7, 0, 5];
const DIGITS_PER_CLASS = 3;
export const N_BLOCKS = MAGIC.length + DIGITS_PER_CLASS * VEHICLE_CLASSES.length + 1;
export const BLOCK = 16;
export const SMALL_BLOCK = 8;
export const MAX_COUNT = 255;

const LEVEL_BASE = 16;
const LEVEL_STEP = 32;

/** Row-major single-channel image. */
export interface GrayImage {
  width: number;
  height: number;
  pixels: Float64Array;
}

function blockSize(width: number): number {
  if (width >= N_BLOCKS * BLOCK) return BLOCK;
  if (width >= N_BLOCKS * SMALL_BLOCK) return SMALL_BLOCK;
  throw new Error(`frame width ${width} too narrow for a ${N_BLOCKS}-block header`);
}

/** Stamp the header strip onto a uint8 grayscale buffer in place. */
export function encodeCounts(
  pixels: Uint8Array | Uint8ClampedArray,
  width: number,
  height: number,
  counts: Partial<Counts>,
): void {
  if (width <= 0 || height <= 0 || pixels.length !== width * height) {
    throw new Error("pixels must be a non-empty width*height buffer");
  }
  const size = blockSize(width);
  if (height < size) {
    throw new Error("image too short for the header strip");
  }
  const digits = [...MAGIC];
  for (const cls of VEHICLE_CLASSES) {
    const value = Math.trunc(counts[cls] ?? 0);
    if (value < 0 || value > MAX_COUNT) {
      throw new Error(`count for ${cls} must be in [0, ${MAX_COUNT}], got ${value}`);
    }
    digits.push((value >> 6) & 0o7, (value >> 3) & 0o7, value & 0o7);
  }
  let checksum = 0;
  for (let i = MAGIC.length; i < digits.length; i++) checksum += digits[i];
  digits.push(checksum % 8);
  for (let i = 0; i < digits.length; i++) {
    const level = LEVEL_BASE + LEVEL_STEP * digits[i];
    for (let y = 0; y < size; y++) {
      for (let x = i * size; x < (i + 1) * size; x++) {
        pixels[y * width + x] = level;
      }
    }
  }
}

/** Recover counts from a frame's header strip, or null when no valid
 * header is present (wrong magic, bad checksum, frame too small). */
export function decodeCounts(image: GrayImage): Counts | null {
  if (image.width <= 0 || image.height <= 0) return null;
  for (const size of [BLOCK, SMALL_BLOCK]) {
    if (image.width >= N_BLOCKS * size && image.height >= size) {
      const decoded = decodeAt(image, size);
      if (decoded !== null) return decoded;
    }
  }
  return null;
}

function decodeAt(image: GrayImage, size: number): Counts | null {
  const lo = Math.floor(size / 4);
  const hi = size - lo;
  const digits: number[] = [];
  for (let i = 0; i < N_BLOCKS; i++) {
    let sum = 0;
    let n = 0;
    for (let y = lo; y < hi; y++) {
      const row = y * image.width;
      for (let x = i * size + lo; x < i * size + hi; x++) {
        sum += image.pixels[row + x];
        n++;
      }
    }
    const level = sum / n;
    const digit = Math.round((level - LEVEL_BASE) / LEVEL_STEP);
    if (digit < 0 || digit > 7) return null;
    // Reject samples too far from any legal level: real imagery, not a header.
    if (Math.abs(level - (LEVEL_BASE + LEVEL_STEP * digit)) > LEVEL_STEP / 4) return null;
    digits.push(digit);
  }
  for (let i = 0; i < MAGIC.length; i++) {
    if (digits[i] !== MAGIC[i]) return null;
  }
  const payload = digits.slice(MAGIC.length, MAGIC.length + DIGITS_PER_CLASS * VEHICLE_CLASSES.length);
  const checksum = payload.reduce((a, b) => a + b, 0) % 8;
  if (digits[digits.length - 1] !== checksum) return null;
  const counts = zeroCounts();
  VEHICLE_CLASSES.forEach((cls, k) => {
    const [d0, d1, d2] = payload.slice(3 * k, 3 * k + 3);
    counts[cls] = (d0 << 6) | (d1 << 3) | d2;
  });
  return counts;
}
