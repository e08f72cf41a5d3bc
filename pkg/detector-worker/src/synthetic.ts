/** Deterministic detection: read the pixel-header pattern back out of the
 * frame. Frames that do not decode as images come back flagged corrupt
 * with zero counts; decodable frames without a valid header count zero
 * vehicles. */

import { decodeCounts } from "./codec";
import { zeroCounts } from "./counts";
import { decodeJpeg, toGray } from "./jpeg";
import { WireDetection } from "./protocol";

export const SYNTHETIC_MODEL_ID = "synthetic-pattern";

export function syntheticDetect(source: string, payload: Buffer): WireDetection {
  const image = decodeJpeg(payload);
  if (image === null) {
    return { source, counts: zeroCounts(), corrupt: true };
  }
  const counts = decodeCounts(toGray(image));
  return { source, counts: counts ?? zeroCounts(), corrupt: false };
}
