/** Newline-delimited JSON wire protocol spoken on stdin/stdout.
 *
 * The gateway sends one detect request per line and expects exactly one
 * result or error line back, carrying the same batch_id. A request line
 * that cannot be parsed at all is answered with an error carrying
 * batch_id -1, and the loop continues.
 */

import { z } from "zod";

import { Counts } from "./counts";

export const wireFrameSchema = z.object({
  source: z.string().min(1),
  captured_at: z.string().min(1),
  format: z.string().default("jpeg"),
  data: z.string(),
});

export const detectRequestSchema = z.object({
  type: z.literal("detect"),
  batch_id: z.number().int().nonnegative(),
  frames: z.array(wireFrameSchema),
});

export type WireFrame = z.infer<typeof wireFrameSchema>;
export type DetectRequest = z.infer<typeof detectRequestSchema>;

export interface WireDetection {
  source: string;
  counts: Counts;
  corrupt: boolean;
}

export function helloLine(maxBatch: number, inputSize: number, modelId: string): string {
  return JSON.stringify({
    type: "hello",
    max_batch: maxBatch,
    input_size: inputSize,
    model_id: modelId,
  });
}

export function resultLine(batchId: number, results: WireDetection[]): string {
  return JSON.stringify({ type: "result", batch_id: batchId, results });
}

export function errorLine(batchId: number, message: string): string {
  return JSON.stringify({ type: "error", batch_id: batchId, message });
}
