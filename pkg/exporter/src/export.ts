/**
 * Export job: run the network over every image in a directory and write
 * one LCDF file per (image, layer), plus a JSON manifest describing the
 * model provenance, preprocessing, and flattening order.
 */

import { mkdirSync, readdirSync, writeFileSync } from 'fs'
import { basename, extname, join } from 'path'

import { preprocess, CHANNEL_MEANS, RESIZE_SIZE } from './image'
import { encodeLcdf } from './lcdf'
import {
  LAYER_DIMS,
  NetworkWeights,
  activations,
  disposeWeights,
  generateWeights,
  requiredDepth,
  INPUT_SIZE,
} from './network'
import { loadWeights } from './weights'

export interface ExportJob {
  imageDir: string
  layers: string[]
  outDir: string
  device: 'cpu' | 'gpu'
  weightsPath?: string
  seed: number
}

const IMAGE_EXTENSIONS = new Set(['.png', '.jpg', '.jpeg'])

export function listImages(dir: string): string[] {
  return readdirSync(dir)
    .filter((f) => IMAGE_EXTENSIONS.has(extname(f).toLowerCase()))
    .sort()
    .map((f) => join(dir, f))
}

export function exportFeatures(job: ExportJob): number {
  for (const layer of job.layers) {
    if (!(layer in LAYER_DIMS)) throw new Error(`unknown layer ${layer}`)
  }
  if (job.device === 'gpu') {
    // no GPU backend is wired in this runtime; stay correct on cpu
    console.warn('gpu requested but unavailable; running on cpu')
  }
  const files = listImages(job.imageDir)
  if (files.length === 0) throw new Error(`no images in ${job.imageDir}`)

  const depth = requiredDepth(job.layers)
  const weights: NetworkWeights = job.weightsPath
    ? loadWeights(job.weightsPath)
    : generateWeights(job.seed, depth)

  mkdirSync(job.outDir, { recursive: true })
  let written = 0
  try {
    for (const file of files) {
      const imageId = basename(file, extname(file))
      const input = preprocess(file)
      const acts = activations(input, weights, job.layers)
      input.dispose()
      for (const layer of job.layers) {
        const values = acts.get(layer)
        if (!values) throw new Error(`missing activation for ${layer}`)
        const out = join(job.outDir, `${imageId}.${layer}.lcdf`)
        writeFileSync(out, encodeLcdf(layer, imageId, values))
        written += 1
      }
    }
    writeManifest(job, weights, files.length)
  } finally {
    disposeWeights(weights)
  }
  return written
}

function writeManifest(
  job: ExportJob,
  weights: NetworkWeights,
  imageCount: number,
): void {
  const manifest = {
    command: 'export',
    images: imageCount,
    layers: job.layers,
    layer_dims: Object.fromEntries(job.layers.map((l) => [l, LAYER_DIMS[l]])),
    device: 'cpu',
    model: {
      architecture:
        'conv96x11s4-pool3s2-conv256x5-pool3s2-conv384x3-conv384x3-conv256x3-pool3s2-fc4096-fc4096-fc1000',
      weights: weights.origin,
      seed: job.weightsPath ? null : job.seed,
    },
    preprocessing: {
      resize: `${RESIZE_SIZE}x${RESIZE_SIZE} bilinear (half-pixel centers)`,
      crop: `center ${INPUT_SIZE}x${INPUT_SIZE}`,
      channel_order: 'RGB',
      mean_subtraction: CHANNEL_MEANS,
    },
    flattening_order: 'channel-major (C, H, W row-major)',
    normalization: 'none (raw activations; consumers normalize on read)',
  }
  writeFileSync(
    join(job.outDir, 'manifest.json'),
    JSON.stringify(manifest, null, 2) + '\n',
  )
}
