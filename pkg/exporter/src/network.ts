/**
 * Scene-classification CNN with the standard five-convolution /
 * three-pooling / three-fully-connected layout. Activations of any layer
 * can be captured as flat whole-image feature vectors.
 *
 * Expected flattened dimensions per layer (227x227x3 input):
 *
 *   CONV1 290400  POOL1 69984  CONV2 186624  POOL2 43264  CONV3 64896
 *   CONV4 64896   CONV5 43264  POOL5 9216    FC6 4096     FC7 4096
 *   FC8 1000
 *
 * Convolutional activations are captured after their ReLU; FC8 is the
 * raw logit vector. Spatial maps are flattened channel-major (C, H, W).
 */

import * as tf from '@tensorflow/tfjs'

import { gaussianArray, hashSeed } from './rng'

export const INPUT_SIZE = 227

export const LAYER_DIMS: Record<string, number> = {
  CONV1: 290400,
  POOL1: 69984,
  CONV2: 186624,
  POOL2: 43264,
  CONV3: 64896,
  CONV4: 64896,
  CONV5: 43264,
  POOL5: 9216,
  FC6: 4096,
  FC7: 4096,
  FC8: 1000,
}

export const LAYER_ORDER = [
  'CONV1', 'POOL1', 'CONV2', 'POOL2', 'CONV3', 'CONV4', 'CONV5', 'POOL5',
  'FC6', 'FC7', 'FC8',
] as const

interface ConvSpec {
  kernel: [number, number, number, number] // [h, w, in, out]
  stride: number
  pad: 'valid' | 'same'
}

const CONV_SPECS: Record<string, ConvSpec> = {
  conv1: { kernel: [11, 11, 3, 96], stride: 4, pad: 'valid' },
  conv2: { kernel: [5, 5, 96, 256], stride: 1, pad: 'same' },
  conv3: { kernel: [3, 3, 256, 384], stride: 1, pad: 'same' },
  conv4: { kernel: [3, 3, 384, 384], stride: 1, pad: 'same' },
  conv5: { kernel: [3, 3, 384, 256], stride: 1, pad: 'same' },
}

const FC_SPECS: Record<string, [number, number]> = {
  fc6: [9216, 4096],
  fc7: [4096, 4096],
  fc8: [4096, 1000],
}

export interface NetworkWeights {
  tensors: Map<string, tf.Tensor>
  /** provenance note recorded in the export manifest */
  origin: string
}

/** Deepest stage (index into LAYER_ORDER) needed to serve `layers`. */
export function requiredDepth(layers: readonly string[]): number {
  let depth = -1
  for (const name of layers) {
    const i = LAYER_ORDER.indexOf(name as (typeof LAYER_ORDER)[number])
    if (i < 0) throw new Error(`unknown layer ${name}`)
    depth = Math.max(depth, i)
  }
  return depth
}

/**
 * Deterministic seeded weights (He-style scaling). Each tensor's stream is
 * derived from (seed, tensor name), so the set of generated tensors never
 * shifts the values of the others.
 */
export function generateWeights(seed: number, depth: number): NetworkWeights {
  const tensors = new Map<string, tf.Tensor>()
  const put = (name: string, shape: number[], fanIn: number) => {
    const n = shape.reduce((a, b) => a * b, 1)
    const scale = Math.sqrt(2.0 / fanIn)
    tensors.set(
      name,
      tf.tensor(gaussianArray(n, hashSeed(seed, name), scale), shape),
    )
    tensors.set(`${name}.bias`, tf.zeros([shape[shape.length - 1]]))
  }
  for (const [name, spec] of Object.entries(CONV_SPECS)) {
    const [kh, kw, cin] = spec.kernel
    put(name, spec.kernel as unknown as number[], kh * kw * cin)
  }
  if (depth >= LAYER_ORDER.indexOf('FC6')) {
    for (const [name, [fanIn, fanOut]] of Object.entries(FC_SPECS)) {
      put(name, [fanIn, fanOut], fanIn)
    }
  }
  return { tensors, origin: `seeded(${seed})` }
}

function conv(
  x: tf.Tensor4D,
  weights: NetworkWeights,
  name: string,
): tf.Tensor4D {
  const spec = CONV_SPECS[name]
  const kernel = weights.tensors.get(name) as tf.Tensor4D
  const bias = weights.tensors.get(`${name}.bias`) as tf.Tensor1D
  const y = tf.conv2d(x, kernel, spec.stride, spec.pad)
  return tf.relu(tf.add(y, bias))
}

function fc(
  x: tf.Tensor2D,
  weights: NetworkWeights,
  name: string,
  relu: boolean,
): tf.Tensor2D {
  const w = weights.tensors.get(name) as tf.Tensor2D
  const b = weights.tensors.get(`${name}.bias`) as tf.Tensor1D
  const y = tf.add(tf.matMul(x, w), b) as tf.Tensor2D
  return relu ? (tf.relu(y) as tf.Tensor2D) : y
}

/** Flatten a [1, H, W, C] map channel-major: (C, H, W) row-major. */
function flattenChannelMajor(t: tf.Tensor4D): tf.Tensor2D {
  const [, h, w, c] = t.shape
  return tf.reshape(tf.transpose(t, [0, 3, 1, 2]), [1, h * w * c])
}

/**
 * Run the network over one preprocessed [1, 227, 227, 3] input and return
 * the flat activation of every requested layer.
 */
export function activations(
  input: tf.Tensor4D,
  weights: NetworkWeights,
  layers: readonly string[],
): Map<string, Float32Array> {
  const depth = requiredDepth(layers)
  const wanted = new Set(layers)
  const out = new Map<string, Float32Array>()

  tf.tidy(() => {
    const capture = (name: string, t: tf.Tensor) => {
      if (wanted.has(name)) {
        const flat =
          t.rank === 4 ? flattenChannelMajor(t as tf.Tensor4D) : t
        const values = flat.dataSync() as Float32Array
        if (values.length !== LAYER_DIMS[name]) {
          throw new Error(
            `${name}: produced ${values.length} values, expected ${LAYER_DIMS[name]}`,
          )
        }
        out.set(name, Float32Array.from(values))
      }
    }

    let t: tf.Tensor4D = input
    const stages: Array<[string, () => tf.Tensor4D]> = [
      ['CONV1', () => conv(t, weights, 'conv1')],
      ['POOL1', () => tf.maxPool(t, 3, 2, 'valid')],
      ['CONV2', () => conv(t, weights, 'conv2')],
      ['POOL2', () => tf.maxPool(t, 3, 2, 'valid')],
      ['CONV3', () => conv(t, weights, 'conv3')],
      ['CONV4', () => conv(t, weights, 'conv4')],
      ['CONV5', () => conv(t, weights, 'conv5')],
      ['POOL5', () => tf.maxPool(t, 3, 2, 'valid')],
    ]
    for (const [name, step] of stages) {
      if (LAYER_ORDER.indexOf(name as never) > depth) return
      t = step()
      capture(name, t)
    }
    if (depth < LAYER_ORDER.indexOf('FC6')) return
    let flat = flattenChannelMajor(t)
    flat = fc(flat, weights, 'fc6', true)
    capture('FC6', flat)
    if (depth < LAYER_ORDER.indexOf('FC7')) return
    flat = fc(flat, weights, 'fc7', true)
    capture('FC7', flat)
    if (depth < LAYER_ORDER.indexOf('FC8')) return
    capture('FC8', fc(flat, weights, 'fc8', false))
  })
  return out
}

export function disposeWeights(weights: NetworkWeights): void {
  for (const t of weights.tensors.values()) t.dispose()
  weights.tensors.clear()
}
