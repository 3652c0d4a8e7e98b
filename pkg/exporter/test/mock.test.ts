import { describe, expect, it } from "vitest";

import { fnv1a64, splitmix64, uniformStream } from "../src/hash.js";
import { mockUnitVector, MOCK_DIM } from "../src/mock.js";

describe("hashing", () => {
  it("fnv1a64 matches known vectors", () => {
    // reference values of the standard 64-bit FNV-1a parameters
    expect(fnv1a64("")).toBe(0xcbf29ce484222325n);
    expect(fnv1a64("a")).toBe(0xaf63dc4c8601ec8cn);
  });

  it("splitmix64 is a pure function of its state", () => {
    const a = splitmix64(42n);
    const b = splitmix64(42n);
    expect(a.value).toBe(b.value);
    expect(a.state).toBe(b.state);
    expect(splitmix64(a.state).value).not.toBe(a.value);
  });

  it("uniforms live in [0, 1)", () => {
    const stream = uniformStream(fnv1a64("check"));
    for (let i = 0; i < 1000; i++) {
      const u = stream.next().value;
      expect(u).toBeGreaterThanOrEqual(0);
      expect(u).toBeLessThan(1);
    }
  });
});

describe("mock embeddings", () => {
  it("is deterministic for the same key and seed", () => {
    const a = mockUnitVector("room_a/view_0", 7);
    const b = mockUnitVector("room_a/view_0", 7);
    expect(Buffer.from(a.buffer).equals(Buffer.from(b.buffer))).toBe(true);
  });

  it("differs across keys and seeds", () => {
    const base = mockUnitVector("bedroom", 7);
    expect(Buffer.from(base.buffer).equals(Buffer.from(mockUnitVector("kitchen", 7).buffer))).toBe(
      false
    );
    expect(Buffer.from(base.buffer).equals(Buffer.from(mockUnitVector("bedroom", 8).buffer))).toBe(
      false
    );
  });

  it("has unit norm within 1e-6 and the default dimension 512", () => {
    const v = mockUnitVector("anything", 3);
    expect(v.length).toBe(MOCK_DIM);
    expect(MOCK_DIM).toBe(512);
    let norm = 0;
    for (const x of v) norm += x * x;
    expect(Math.abs(Math.sqrt(norm) - 1)).toBeLessThan(1e-6);
  });
});
