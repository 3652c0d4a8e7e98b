/**
 * Mock embeddings: a seeded 64-bit hash of the input key drives a splitmix64
 * stream, whose uniforms become a direction vector that is normalized once
 * and rounded to float32. No floating-point op before the normalization
 * depends on platform behavior, so files are bit-identical everywhere.
 */

import { fnv1a64, uniformStream } from "./hash.js";

export const MOCK_DIM = 512;

export function mockUnitVector(key: string, seed: number, dim: number = MOCK_DIM): Float32Array {
  const stream = uniformStream(fnv1a64(`${seed}:${key}`));
  const direction = new Float64Array(dim);
  let normSquared = 0;
  for (let i = 0; i < dim; i++) {
    const v = stream.next().value - 0.5;
    direction[i] = v;
    normSquared += v * v;
  }
  const norm = Math.sqrt(normSquared);
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) {
    out[i] = direction[i] / norm;
  }
  return out;
}
