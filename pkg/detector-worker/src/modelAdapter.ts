/** Adapter slot for a real detection model.
 *
 * A model is any CommonJS module exporting `detect(frames)` (and
 * optionally `modelId`): it receives letterboxed RGBA inputs with their
 * coordinate metadata and returns one per-class count record per frame.
 * The worker owns decoding and preprocessing; the adapter owns inference.
 */

import { resolve } from "path";

import { Counts, VEHICLE_CLASSES } from "./counts";
import { LetterboxMeta } from "./letterbox";
import { RgbaImage } from "./jpeg";

export interface AdapterFrame {
  source: string;
  capturedAt: string;
  image: RgbaImage;
  meta: LetterboxMeta;
}

export interface ModelAdapter {
  modelId?: string;
  detect(frames: AdapterFrame[]): Counts[] | Promise<Counts[]>;
}

export function loadAdapter(path: string): ModelAdapter {
  // eslint-disable-next-line @typescript-eslint/no-var-requires
  const loaded = require(resolve(path));
  const adapter: unknown = loaded && typeof loaded === "object" && "default" in loaded ? loaded.default : loaded;
  if (!adapter || typeof adapter !== "object" || typeof (adapter as ModelAdapter).detect !== "function") {
    throw new Error(`model at ${path} does not export a detect(frames) function`);
  }
  return adapter as ModelAdapter;
}

/** Normalize adapter output into a full, non-negative integer count record. */
export function sanitizeCounts(raw: Partial<Counts> | undefined): Counts {
  const counts = {} as Counts;
  for (const cls of VEHICLE_CLASSES) {
    const value = raw?.[cls] ?? 0;
    if (typeof value !== "number" || !Number.isInteger(value) || value < 0) {
      throw new Error(`adapter returned a bad count for ${cls}: ${value}`);
    }
    counts[cls] = value;
  }
  return counts;
}
