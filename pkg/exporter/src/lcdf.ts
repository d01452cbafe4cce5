/**
 * LCDF feature-file container, little-endian:
 *
 *   magic    4 bytes  "LCDF"
 *   version  u32      1
 *   name_len u16      + UTF-8 layer/source name
 *   id_len   u16      + UTF-8 image id
 *   dim      u64
 *   payload  f32[dim] raw (unnormalized) values
 */

const MAGIC = Buffer.from('LCDF', 'ascii')
const VERSION = 1

export function encodeLcdf(
  layer: string,
  imageId: string,
  values: Float32Array,
): Buffer {
  const nameB = Buffer.from(layer, 'utf-8')
  const idB = Buffer.from(imageId, 'utf-8')
  if (nameB.length > 0xffff || idB.length > 0xffff) {
    throw new Error('layer name / image id longer than 65535 bytes')
  }
  for (const v of values) {
    if (!Number.isFinite(v)) throw new Error('feature values must be finite')
  }
  const header = Buffer.alloc(4 + 4 + 2 + nameB.length + 2 + idB.length + 8)
  let off = 0
  MAGIC.copy(header, off)
  off += 4
  off = header.writeUInt32LE(VERSION, off)
  off = header.writeUInt16LE(nameB.length, off)
  off += nameB.copy(header, off)
  off = header.writeUInt16LE(idB.length, off)
  off += idB.copy(header, off)
  header.writeBigUInt64LE(BigInt(values.length), off)

  const payload = Buffer.alloc(values.length * 4)
  for (let i = 0; i < values.length; i++) payload.writeFloatLE(values[i], i * 4)
  return Buffer.concat([header, payload])
}

export interface LcdfRecord {
  layer: string
  imageId: string
  values: Float32Array
}

/** Parser used by the round-trip tests; validates the full layout. */
export function decodeLcdf(buf: Buffer): LcdfRecord {
  let off = 0
  const take = (n: number) => {
    if (off + n > buf.length) throw new Error(`truncated at byte ${off}`)
    const out = buf.subarray(off, off + n)
    off += n
    return out
  }
  if (!take(4).equals(MAGIC)) throw new Error('bad magic')
  const version = take(4).readUInt32LE(0)
  if (version !== VERSION) throw new Error(`unsupported version ${version}`)
  const nameLen = take(2).readUInt16LE(0)
  const layer = take(nameLen).toString('utf-8')
  const idLen = take(2).readUInt16LE(0)
  const imageId = take(idLen).toString('utf-8')
  const dim = Number(take(8).readBigUInt64LE(0))
  const payload = take(dim * 4)
  if (off !== buf.length) throw new Error(`${buf.length - off} trailing bytes`)
  const values = new Float32Array(dim)
  for (let i = 0; i < dim; i++) values[i] = payload.readFloatLE(i * 4)
  return { layer, imageId, values }
}
