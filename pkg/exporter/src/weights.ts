/**
 * Binary weight container ("LCNW"), little-endian:
 *
 *   magic   4 bytes "LCNW"
 *   version u32     1
 *   count   u32
 *   per tensor: name_len u16 + UTF-8 name, rank u8, dims u32[rank],
 *               f32 payload (row-major)
 *
 * Used to persist a trained/generated parameter set so exports can pin an
 * exact model snapshot.
 */

import { readFileSync, writeFileSync } from 'fs'

import * as tf from '@tensorflow/tfjs'

import { NetworkWeights } from './network'

const MAGIC = Buffer.from('LCNW', 'ascii')
const VERSION = 1

export function saveWeights(path: string, weights: NetworkWeights): void {
  const parts: Buffer[] = []
  const head = Buffer.alloc(12)
  MAGIC.copy(head, 0)
  head.writeUInt32LE(VERSION, 4)
  head.writeUInt32LE(weights.tensors.size, 8)
  parts.push(head)
  for (const [name, tensor] of weights.tensors) {
    const nameB = Buffer.from(name, 'utf-8')
    const meta = Buffer.alloc(2 + nameB.length + 1 + 4 * tensor.shape.length)
    let off = meta.writeUInt16LE(nameB.length, 0)
    off += nameB.copy(meta, off)
    off = meta.writeUInt8(tensor.shape.length, off)
    for (const d of tensor.shape) off = meta.writeUInt32LE(d, off)
    parts.push(meta)
    const data = tensor.dataSync() as Float32Array
    parts.push(Buffer.from(data.buffer, data.byteOffset, data.byteLength))
  }
  writeFileSync(path, Buffer.concat(parts))
}

export function loadWeights(path: string): NetworkWeights {
  const buf = readFileSync(path)
  let off = 0
  const take = (n: number) => {
    if (off + n > buf.length) throw new Error(`${path}: truncated at ${off}`)
    const out = buf.subarray(off, off + n)
    off += n
    return out
  }
  if (!take(4).equals(MAGIC)) throw new Error(`${path}: bad magic`)
  const version = take(4).readUInt32LE(0)
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version}`)
  const count = take(4).readUInt32LE(0)
  const tensors = new Map<string, tf.Tensor>()
  for (let i = 0; i < count; i++) {
    const nameLen = take(2).readUInt16LE(0)
    const name = take(nameLen).toString('utf-8')
    const rank = take(1).readUInt8(0)
    const shape: number[] = []
    for (let r = 0; r < rank; r++) shape.push(take(4).readUInt32LE(0))
    const n = shape.reduce((a, b) => a * b, 1)
    const raw = take(n * 4)
    const values = new Float32Array(n)
    for (let j = 0; j < n; j++) values[j] = raw.readFloatLE(j * 4)
    tensors.set(name, tf.tensor(values, shape))
  }
  if (off !== buf.length) throw new Error(`${path}: trailing bytes`)
  return { tensors, origin: `file(${path})` }
}
