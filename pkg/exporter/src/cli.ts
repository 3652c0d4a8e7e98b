#!/usr/bin/env node
/**
 * embedding-exporter CLI.
 *
 *   export-images --room-dir <dir> --out <file> [--model <name> | --mock --seed <n>]
 *   export-texts  --texts <file>  --out <file> [--model <name> | --mock --seed <n>]
 */

import { exportImageEmbeddings, exportTextEmbeddings, ExportJob } from "./exporter.js";

interface Args {
  command: string;
  flags: Map<string, string | boolean>;
}

function parseArgs(argv: string[]): Args {
  if (argv.length === 0) {
    throw new Error("usage: embedding-exporter <export-images|export-texts> ...");
  }
  const [command, ...rest] = argv;
  const flags = new Map<string, string | boolean>();
  for (let i = 0; i < rest.length; i++) {
    const token = rest[i];
    if (!token.startsWith("--")) {
      throw new Error(`unexpected argument: ${token}`);
    }
    const name = token.slice(2);
    if (name === "mock") {
      flags.set(name, true);
    } else {
      const value = rest[++i];
      if (value === undefined) throw new Error(`--${name} needs a value`);
      flags.set(name, value);
    }
  }
  return { command, flags };
}

function jobFromFlags(flags: Map<string, string | boolean>): ExportJob {
  const out = flags.get("out");
  if (typeof out !== "string") throw new Error("--out <file> is required");
  const mock = flags.get("mock") === true;
  const model = flags.get("model");
  if (mock && model) throw new Error("--model and --mock are mutually exclusive");
  if (!mock && !model) throw new Error("pick --model <name> or --mock --seed <n>");
  if (mock) {
    const seed = flags.get("seed");
    if (typeof seed !== "string") throw new Error("mock mode requires --seed <n>");
    return { mode: "mock", seed: Number(seed), out };
  }
  return { mode: "model", modelName: String(model), out };
}

export async function run(argv: string[]): Promise<number> {
  const { command, flags } = parseArgs(argv);
  const job = jobFromFlags(flags);
  if (command === "export-images") {
    const roomDir = flags.get("room-dir");
    if (typeof roomDir !== "string") throw new Error("--room-dir <dir> is required");
    const n = await exportImageEmbeddings(roomDir, job);
    console.log(`${n} image embeddings -> ${job.out}`);
    return 0;
  }
  if (command === "export-texts") {
    const texts = flags.get("texts");
    if (typeof texts !== "string") throw new Error("--texts <file> is required");
    const n = await exportTextEmbeddings(texts, job);
    console.log(`${n} text embeddings -> ${job.out}`);
    return 0;
  }
  throw new Error(`unknown command: ${command}`);
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  run(process.argv.slice(2))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(`error: ${err.message}`);
      process.exit(1);
    });
}
