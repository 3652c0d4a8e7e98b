/**
 * EMB1 container: magic "EMB1", little-endian u32 count and dim, count*dim
 * little-endian float32 values row-major, then a UTF-8 JSON trailer
 * {"ids": [...]}. Output files are written atomically (temp + rename).
 */

import * as fs from "node:fs";
import * as path from "node:path";

export interface EmbeddingFile {
  rows: Float32Array[];
  ids: string[];
}

export function encodeEmb1(rows: Float32Array[], ids: string[]): Buffer {
  if (rows.length !== ids.length) {
    throw new Error(`${rows.length} rows but ${ids.length} ids`);
  }
  const dim = rows.length > 0 ? rows[0].length : 0;
  for (const row of rows) {
    if (row.length !== dim) {
      throw new Error("embedding rows have mixed dimensions");
    }
  }
  const header = Buffer.alloc(12);
  header.write("EMB1", 0, "ascii");
  header.writeUInt32LE(rows.length, 4);
  header.writeUInt32LE(dim, 8);
  const payload = Buffer.alloc(rows.length * dim * 4);
  const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  rows.forEach((row, r) => {
    for (let i = 0; i < dim; i++) {
      view.setFloat32((r * dim + i) * 4, row[i], true);
    }
  });
  const trailer = Buffer.from(JSON.stringify({ ids }), "utf-8");
  return Buffer.concat([header, payload, trailer]);
}

export function writeEmb1(filePath: string, rows: Float32Array[], ids: string[]): void {
  const data = encodeEmb1(rows, ids);
  const tmp = path.join(
    path.dirname(path.resolve(filePath)),
    `.${path.basename(filePath)}.tmp-${process.pid}`
  );
  fs.writeFileSync(tmp, data);
  fs.renameSync(tmp, filePath);
}

export function readEmb1(filePath: string): EmbeddingFile {
  const data = fs.readFileSync(filePath);
  if (data.length < 12 || data.toString("ascii", 0, 4) !== "EMB1") {
    throw new Error(`${filePath}: not an EMB1 file`);
  }
  const count = data.readUInt32LE(4);
  const dim = data.readUInt32LE(8);
  const payloadEnd = 12 + count * dim * 4;
  if (data.length < payloadEnd) {
    throw new Error(`${filePath}: truncated EMB1 payload`);
  }
  const view = new DataView(data.buffer, data.byteOffset + 12, count * dim * 4);
  const rows: Float32Array[] = [];
  for (let r = 0; r < count; r++) {
    const row = new Float32Array(dim);
    for (let i = 0; i < dim; i++) {
      row[i] = view.getFloat32((r * dim + i) * 4, true);
    }
    rows.push(row);
  }
  let ids: string[];
  try {
    ids = JSON.parse(data.toString("utf-8", payloadEnd)).ids;
  } catch (err) {
    throw new Error(`${filePath}: bad EMB1 trailer (${err})`);
  }
  if (!Array.isArray(ids) || ids.length !== count) {
    throw new Error(`${filePath}: trailer ids do not match row count`);
  }
  return { rows, ids: ids.map(String) };
}
