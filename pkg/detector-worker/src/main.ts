/** Command-line entry: parse flags, then run the protocol loop on
 * stdin/stdout. Usage errors exit 2 before the hello line is emitted. */

import {
  DEFAULT_INPUT_SIZE,
  DEFAULT_MAX_BATCH,
  WorkerConfig,
  runWorker,
  validateConfig,
} from "./worker";

const USAGE =
  "usage: main.js --mode synthetic|model [--model PATH] [--max-batch N] [--input-size N]";

export function parseArgs(argv: string[]): WorkerConfig {
  let mode: string | undefined;
  let modelPath: string | undefined;
  let maxBatch = DEFAULT_MAX_BATCH;
  let inputSize = DEFAULT_INPUT_SIZE;
  const known = ["--mode", "--model", "--max-batch", "--input-size"];
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    if (flag === "--help" || flag === "-h") {
      throw new UsageRequested();
    }
    if (!known.includes(flag)) {
      throw new Error(`unknown argument: ${flag}`);
    }
    const value = argv[++i];
    if (value === undefined) {
      throw new Error(`${flag} needs a value`);
    }
    switch (flag) {
      case "--mode":
        mode = value;
        break;
      case "--model":
        modelPath = value;
        break;
      case "--max-batch":
        maxBatch = Number(value);
        break;
      default:
        inputSize = Number(value);
    }
  }
  if (mode === undefined) {
    throw new Error("--mode is required");
  }
  const config: WorkerConfig = {
    mode: mode as WorkerConfig["mode"],
    modelPath,
    maxBatch,
    inputSize,
  };
  validateConfig(config);
  return config;
}

export class UsageRequested extends Error {}

async function main(): Promise<void> {
  let config: WorkerConfig;
  try {
    config = parseArgs(process.argv.slice(2));
  } catch (err) {
    if (err instanceof UsageRequested) {
      process.stdout.write(USAGE + "\n");
      process.exit(0);
    }
    process.stderr.write(`error: ${err instanceof Error ? err.message : err}\n`);
    process.stderr.write(USAGE + "\n");
    process.exit(2);
  }
  try {
    await runWorker(config!, process.stdin, process.stdout);
  } catch (err) {
    process.stderr.write(`fatal: ${err instanceof Error ? err.message : err}\n`);
    process.exit(1);
  }
}

if (require.main === module) {
  void main();
}
