/** The protocol loop: hello on startup, then one result or error line per
 * request line, batch ids echoed, results order-aligned with the request
 * frames. Runs single threaded; the gateway keeps at most one batch in
 * flight. */

import * as readline from "readline";

import { zeroCounts } from "./counts";
import { decodeJpeg } from "./jpeg";
import { letterbox } from "./letterbox";
import {
  AdapterFrame,
  ModelAdapter,
  loadAdapter,
  sanitizeCounts,
} from "./modelAdapter";
import {
  DetectRequest,
  WireDetection,
  detectRequestSchema,
  errorLine,
  helloLine,
  resultLine,
} from "./protocol";
import { SYNTHETIC_MODEL_ID, syntheticDetect } from "./synthetic";

export const DEFAULT_MAX_BATCH = 64;
export const DEFAULT_INPUT_SIZE = 352;

export interface WorkerConfig {
  mode: "synthetic" | "model";
  modelPath?: string;
  maxBatch: number;
  inputSize: number;
}

export function validateConfig(config: WorkerConfig): void {
  if (config.mode !== "synthetic" && config.mode !== "model") {
    throw new Error(`mode must be "synthetic" or "model", got ${JSON.stringify(config.mode)}`);
  }
  if (config.mode === "model" && !config.modelPath) {
    throw new Error("model mode requires --model <path>");
  }
  if (config.mode === "synthetic" && config.modelPath) {
    throw new Error("--model is only valid with --mode model");
  }
  if (!Number.isInteger(config.maxBatch) || config.maxBatch < 1) {
    throw new Error(`max batch must be a positive integer, got ${config.maxBatch}`);
  }
  if (!Number.isInteger(config.inputSize) || config.inputSize < 1) {
    throw new Error(`input size must be a positive integer, got ${config.inputSize}`);
  }
}

function batchIdOf(parsed: unknown): number {
  if (parsed && typeof parsed === "object" && "batch_id" in parsed) {
    const id = (parsed as { batch_id: unknown }).batch_id;
    if (typeof id === "number" && Number.isInteger(id) && id >= 0) return id;
  }
  return -1;
}

async function detectWithAdapter(
  adapter: ModelAdapter,
  request: DetectRequest,
  inputSize: number,
): Promise<WireDetection[]> {
  const results: (WireDetection | null)[] = [];
  const adapterFrames: AdapterFrame[] = [];
  const adapterSlots: number[] = [];
  request.frames.forEach((frame, i) => {
    const image = decodeJpeg(Buffer.from(frame.data, "base64"));
    if (image === null) {
      results[i] = { source: frame.source, counts: zeroCounts(), corrupt: true };
      return;
    }
    const boxed = letterbox(image, inputSize);
    adapterFrames.push({
      source: frame.source,
      capturedAt: frame.captured_at,
      image: boxed.image,
      meta: boxed.meta,
    });
    adapterSlots.push(i);
    results[i] = null;
  });
  const counts = adapterFrames.length > 0 ? await adapter.detect(adapterFrames) : [];
  if (!Array.isArray(counts) || counts.length !== adapterFrames.length) {
    throw new Error(`adapter returned ${counts?.length} results for ${adapterFrames.length} frames`);
  }
  adapterSlots.forEach((slot, k) => {
    results[slot] = {
      source: request.frames[slot].source,
      counts: sanitizeCounts(counts[k]),
      corrupt: false,
    };
  });
  return results as WireDetection[];
}

export async function runWorker(
  config: WorkerConfig,
  input: NodeJS.ReadableStream,
  output: NodeJS.WritableStream,
): Promise<void> {
  validateConfig(config);
  let adapter: ModelAdapter | null = null;
  let modelId = SYNTHETIC_MODEL_ID;
  if (config.mode === "model") {
    adapter = loadAdapter(config.modelPath as string);
    modelId = adapter.modelId ?? "model";
  }
  const write = (line: string) => {
    output.write(line + "\n");
  };
  write(helloLine(config.maxBatch, config.inputSize, modelId));

  const lines = readline.createInterface({ input, crlfDelay: Infinity });
  for await (const line of lines) {
    if (line.trim() === "") continue;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch {
      write(errorLine(-1, "request line is not valid JSON"));
      continue;
    }
    const request = detectRequestSchema.safeParse(parsed);
    if (!request.success) {
      write(errorLine(batchIdOf(parsed), "request does not match the detect schema"));
      continue;
    }
    const { batch_id: batchId, frames } = request.data;
    if (frames.length > config.maxBatch) {
      write(errorLine(batchId, `batch of ${frames.length} exceeds max_batch ${config.maxBatch}`));
      continue;
    }
    try {
      let results: WireDetection[];
      if (adapter !== null) {
        results = await detectWithAdapter(adapter, request.data, config.inputSize);
      } else {
        results = frames.map((frame) =>
          syntheticDetect(frame.source, Buffer.from(frame.data, "base64")),
        );
      }
      write(resultLine(batchId, results));
    } catch (err) {
      write(errorLine(batchId, err instanceof Error ? err.message : String(err)));
    }
  }
}
