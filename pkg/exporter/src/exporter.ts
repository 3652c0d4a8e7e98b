/**
 * Export jobs: walk room snapshot directories or instruction text files and
 * emit EMB1 embedding files, either from a real encoder or from the
 * deterministic mock.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { writeEmb1 } from "./emb1.js";
import { mockUnitVector, MOCK_DIM } from "./mock.js";
import { loadEncoder } from "./model.js";

export interface ExportJob {
  mode: "model" | "mock";
  modelName?: string;
  seed?: number;
  out: string;
}

const IMAGE_SIGNATURES: Array<[Buffer, string]> = [
  [Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]), "png"],
  [Buffer.from([0xff, 0xd8, 0xff]), "jpeg"],
  [Buffer.from("GIF8", "ascii"), "gif"],
  [Buffer.from("BM", "ascii"), "bmp"],
  [Buffer.from("RIFF", "ascii"), "webp"],
  [Buffer.from("P5", "ascii"), "pgm"],
  [Buffer.from("P6", "ascii"), "ppm"],
];

function assertDecodable(imagePath: string): void {
  let head: Buffer;
  try {
    const fd = fs.openSync(imagePath, "r");
    head = Buffer.alloc(8);
    fs.readSync(fd, head, 0, 8, 0);
    fs.closeSync(fd);
  } catch {
    throw new Error(`cannot decode image: ${imagePath} (unreadable)`);
  }
  if (!IMAGE_SIGNATURES.some(([sig]) => head.subarray(0, sig.length).equals(sig))) {
    throw new Error(`cannot decode image: ${imagePath} (unknown format)`);
  }
}

/** Snapshot images grouped by room: <roomDir>/<room_id>/<image files>. */
export function collectImages(roomDir: string): Array<{ id: string; path: string }> {
  if (!fs.existsSync(roomDir) || !fs.statSync(roomDir).isDirectory()) {
    throw new Error(`room directory not found: ${roomDir}`);
  }
  const entries: Array<{ id: string; path: string }> = [];
  for (const room of fs.readdirSync(roomDir).sort()) {
    const sub = path.join(roomDir, room);
    if (!fs.statSync(sub).isDirectory()) continue;
    for (const file of fs.readdirSync(sub).sort()) {
      const stem = file.replace(/\.[^.]+$/, "");
      entries.push({ id: `${room}/${stem}`, path: path.join(sub, file) });
    }
  }
  if (entries.length === 0) {
    throw new Error(`no room snapshots under ${roomDir}`);
  }
  return entries;
}

export async function exportImageEmbeddings(roomDir: string, job: ExportJob): Promise<number> {
  const images = collectImages(roomDir);
  for (const image of images) {
    assertDecodable(image.path);
  }
  let rows: Float32Array[];
  if (job.mode === "mock") {
    if (job.seed === undefined) throw new Error("mock mode requires --seed");
    rows = images.map((image) => mockUnitVector(image.id, job.seed!, MOCK_DIM));
  } else {
    const encoder = await loadEncoder(job.modelName ?? "");
    rows = [];
    for (const image of images) {
      rows.push(await encoder.encodeImage(image.path));
    }
  }
  writeEmb1(job.out, rows, images.map((image) => image.id));
  return images.length;
}

export interface TextEntry {
  id: string;
  text: string;
}

/**
 * Instruction texts: either a JSON document {"texts": [{"id", "text"}, ...]}
 * or a plain file with one text per line (ids text_000, text_001, ...).
 */
export function readTexts(textsPath: string): TextEntry[] {
  const raw = fs.readFileSync(textsPath, "utf-8");
  let entries: TextEntry[];
  try {
    const doc = JSON.parse(raw);
    if (!Array.isArray(doc.texts)) throw new Error("missing 'texts' list");
    entries = doc.texts.map((t: any, i: number) => ({
      id: String(t.id ?? `text_${String(i).padStart(3, "0")}`),
      text: String(t.text),
    }));
  } catch {
    entries = raw
      .split("\n")
      .map((line) => line.trim())
      .filter((line) => line.length > 0)
      .map((text, i) => ({ id: `text_${String(i).padStart(3, "0")}`, text }));
  }
  if (entries.length === 0) {
    throw new Error(`no texts to export in ${textsPath}`);
  }
  return entries;
}

export async function exportTextEmbeddings(textsPath: string, job: ExportJob): Promise<number> {
  const entries = readTexts(textsPath);
  let rows: Float32Array[];
  if (job.mode === "mock") {
    if (job.seed === undefined) throw new Error("mock mode requires --seed");
    rows = entries.map((entry) => mockUnitVector(entry.text, job.seed!, MOCK_DIM));
  } else {
    const encoder = await loadEncoder(job.modelName ?? "");
    rows = [];
    for (const entry of entries) {
      rows.push(await encoder.encodeText(entry.text));
    }
  }
  writeEmb1(job.out, rows, entries.map((entry) => entry.id));
  return entries.length;
}
