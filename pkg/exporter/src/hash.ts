/**
 * Integer hashing and PRNG used by mock mode. Everything runs on 64-bit
 * BigInt arithmetic so the stream is identical on every platform.
 */

const MASK64 = 0xffffffffffffffffn;

/** FNV-1a over the UTF-8 bytes of a string. */
export function fnv1a64(text: string): bigint {
  let h = 0xcbf29ce484222325n;
  for (const byte of Buffer.from(text, "utf-8")) {
    h ^= BigInt(byte);
    h = (h * 0x100000001b3n) & MASK64;
  }
  return h;
}

/** splitmix64 step: returns the next output and the advanced state. */
export function splitmix64(state: bigint): { value: bigint; state: bigint } {
  const next = (state + 0x9e3779b97f4a7c15n) & MASK64;
  let z = next;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  z = z ^ (z >> 31n);
  return { value: z, state: next };
}

/** Deterministic uniform doubles in [0, 1) seeded by a 64-bit state. */
export function* uniformStream(seedState: bigint): Generator<number> {
  let state = seedState & MASK64;
  for (;;) {
    const step = splitmix64(state);
    state = step.state;
    // top 53 bits -> exact double in [0, 1)
    yield Number(step.value >> 11n) / 2 ** 53;
  }
}
