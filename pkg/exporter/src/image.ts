/**
 * Image decode and the fixed inference preprocessing: bilinear resize to
 * 256x256, center crop to 227x227, per-channel mean subtraction (RGB
 * means 123.68 / 116.779 / 103.939 on the 0..255 scale).
 */

import { readFileSync } from 'fs'
import { extname } from 'path'

import * as tf from '@tensorflow/tfjs'
import * as jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

import { INPUT_SIZE } from './network'

export const RESIZE_SIZE = 256
export const CHANNEL_MEANS: [number, number, number] = [123.68, 116.779, 103.939]

interface Raster {
  width: number
  height: number
  /** interleaved RGB, 0..255 floats, row-major */
  rgb: Float32Array
}

export function decodeImage(path: string): Raster {
  const buf = readFileSync(path)
  const ext = extname(path).toLowerCase()
  let width: number
  let height: number
  let rgba: Uint8Array
  if (ext === '.png') {
    const png = PNG.sync.read(buf)
    width = png.width
    height = png.height
    rgba = png.data
  } else if (ext === '.jpg' || ext === '.jpeg') {
    const img = jpeg.decode(buf, { useTArray: true })
    width = img.width
    height = img.height
    rgba = img.data
  } else {
    throw new Error(`unsupported image extension: ${path}`)
  }
  const rgb = new Float32Array(width * height * 3)
  for (let i = 0, j = 0; i < rgba.length; i += 4, j += 3) {
    rgb[j] = rgba[i]
    rgb[j + 1] = rgba[i + 1]
    rgb[j + 2] = rgba[i + 2]
  }
  return { width, height, rgb }
}

function resizeBilinear(src: Raster, outW: number, outH: number): Raster {
  const { width: w, height: h, rgb } = src
  const out = new Float32Array(outW * outH * 3)
  for (let y = 0; y < outH; y++) {
    let sy = (y + 0.5) * (h / outH) - 0.5
    if (sy < 0) sy = 0
    if (sy > h - 1) sy = h - 1
    const y0 = Math.floor(sy)
    const fy = sy - y0
    const y1 = Math.min(y0 + 1, h - 1)
    for (let x = 0; x < outW; x++) {
      let sx = (x + 0.5) * (w / outW) - 0.5
      if (sx < 0) sx = 0
      if (sx > w - 1) sx = w - 1
      const x0 = Math.floor(sx)
      const fx = sx - x0
      const x1 = Math.min(x0 + 1, w - 1)
      for (let c = 0; c < 3; c++) {
        const a = rgb[(y0 * w + x0) * 3 + c]
        const b = rgb[(y0 * w + x1) * 3 + c]
        const d = rgb[(y1 * w + x0) * 3 + c]
        const e = rgb[(y1 * w + x1) * 3 + c]
        out[(y * outW + x) * 3 + c] =
          (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * d + fx * e)
      }
    }
  }
  return { width: outW, height: outH, rgb: out }
}

/** Decode + resize + center crop + mean subtraction -> [1, 227, 227, 3]. */
export function preprocess(path: string): tf.Tensor4D {
  const resized = resizeBilinear(decodeImage(path), RESIZE_SIZE, RESIZE_SIZE)
  const offset = Math.floor((RESIZE_SIZE - INPUT_SIZE) / 2)
  const data = new Float32Array(INPUT_SIZE * INPUT_SIZE * 3)
  for (let y = 0; y < INPUT_SIZE; y++) {
    for (let x = 0; x < INPUT_SIZE; x++) {
      const si = ((y + offset) * RESIZE_SIZE + (x + offset)) * 3
      const di = (y * INPUT_SIZE + x) * 3
      data[di] = resized.rgb[si] - CHANNEL_MEANS[0]
      data[di + 1] = resized.rgb[si + 1] - CHANNEL_MEANS[1]
      data[di + 2] = resized.rgb[si + 2] - CHANNEL_MEANS[2]
    }
  }
  return tf.tensor4d(data, [1, INPUT_SIZE, INPUT_SIZE, 3])
}
