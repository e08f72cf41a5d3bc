import { encodeCounts } from "../src/codec";
import { Counts } from "../src/counts";
import { grayToJpeg } from "../src/jpeg";

/** Small deterministic PRNG so failures reproduce. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomCounts(rand: () => number): Counts {
  const draw = () => Math.floor(rand() * 256);
  return { bicycle: draw(), car: draw(), motorcycle: draw(), bus: draw(), truck: draw() };
}

/** Gray frame with the header strip stamped on, JPEG-encoded. */
export function renderFrame(counts: Partial<Counts>, width = 352, height = 240): Buffer {
  const pixels = new Uint8Array(width * height).fill(96);
  encodeCounts(pixels, width, height, counts);
  return grayToJpeg(pixels, width, height, 90);
}

export function wireFrame(source: string, payload: Buffer, capturedAt = "2025-01-10T12:00:00.000Z") {
  return {
    source,
    captured_at: capturedAt,
    format: "jpeg",
    data: payload.toString("base64"),
  };
}
