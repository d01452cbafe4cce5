/** Deterministic PRNG utilities for reproducible weight generation. */

/** fnv-1a string hash, used to derive per-tensor seeds from a base seed. */
export function hashSeed(base: number, name: string): number {
  let h = 0x811c9dc5 ^ base
  for (let i = 0; i < name.length; i++) {
    h ^= name.charCodeAt(i)
    h = Math.imul(h, 0x01000193)
  }
  return h >>> 0
}

/** mulberry32: fast 32-bit generator with full determinism across runs. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** Standard-normal samples via Box-Muller over mulberry32. */
export function gaussianArray(n: number, seed: number, scale: number): Float32Array {
  const uniform = mulberry32(seed)
  const out = new Float32Array(n)
  for (let i = 0; i < n; i += 2) {
    let u1 = uniform()
    while (u1 === 0) u1 = uniform()
    const u2 = uniform()
    const r = Math.sqrt(-2.0 * Math.log(u1))
    out[i] = r * Math.cos(2 * Math.PI * u2) * scale
    if (i + 1 < n) out[i + 1] = r * Math.sin(2 * Math.PI * u2) * scale
  }
  return out
}
