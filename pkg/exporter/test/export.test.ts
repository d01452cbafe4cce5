import { execFileSync } from 'child_process'
import { mkdtempSync, readFileSync, readdirSync, rmSync, writeFileSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'

import { PNG } from 'pngjs'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { preprocess } from '../src/image'
import { decodeLcdf, encodeLcdf } from '../src/lcdf'
import {
  LAYER_DIMS,
  LAYER_ORDER,
  activations,
  disposeWeights,
  generateWeights,
} from '../src/network'
import { gaussianArray, hashSeed } from '../src/rng'
import { exportFeatures, listImages } from '../src/export'
import { loadWeights, saveWeights } from '../src/weights'

function writeTestPng(path: string, seed: number, size = 64): void {
  const png = new PNG({ width: size, height: size })
  let state = seed >>> 0
  for (let i = 0; i < size * size; i++) {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0
    png.data[i * 4] = state & 0xff
    png.data[i * 4 + 1] = (state >>> 8) & 0xff
    png.data[i * 4 + 2] = (state >>> 16) & 0xff
    png.data[i * 4 + 3] = 255
  }
  writeFileSync(path, PNG.sync.write(png))
}

let workDir: string
let imageDir: string

beforeAll(() => {
  workDir = mkdtempSync(join(tmpdir(), 'exporter-test-'))
  imageDir = join(workDir, 'images')
  require('fs').mkdirSync(imageDir)
  for (let i = 0; i < 10; i++) {
    writeTestPng(join(imageDir, `img${String(i).padStart(2, '0')}.png`), 77 + i)
  }
})

afterAll(() => {
  rmSync(workDir, { recursive: true, force: true })
})

describe('deterministic generation', () => {
  it('gaussian streams are reproducible and name-keyed', () => {
    const a = gaussianArray(64, hashSeed(0, 'conv1'), 1.0)
    const b = gaussianArray(64, hashSeed(0, 'conv1'), 1.0)
    const c = gaussianArray(64, hashSeed(0, 'conv2'), 1.0)
    expect(Array.from(a)).toEqual(Array.from(b))
    expect(Array.from(a)).not.toEqual(Array.from(c))
  })
})

describe('lcdf container', () => {
  it('round-trips name, id, and payload', () => {
    const values = Float32Array.from([1.5, -2.25, 0.0, 3e7])
    const buf = encodeLcdf('POOL5-ish', 'image-42', values)
    const rec = decodeLcdf(buf)
    expect(rec.layer).toBe('POOL5-ish')
    expect(rec.imageId).toBe('image-42')
    expect(Array.from(rec.values)).toEqual(Array.from(values))
  })

  it('rejects non-finite payloads', () => {
    expect(() => encodeLcdf('x', 'y', Float32Array.from([NaN]))).toThrow()
  })
})

describe('network activations', () => {
  it('every layer has its documented dimension', () => {
    const weights = generateWeights(7, LAYER_ORDER.length - 1)
    try {
      const input = preprocess(join(imageDir, 'img00.png'))
      const acts = activations(input, weights, LAYER_ORDER)
      input.dispose()
      for (const layer of LAYER_ORDER) {
        expect(acts.get(layer)!.length).toBe(LAYER_DIMS[layer])
      }
      expect(Object.keys(LAYER_DIMS)).toHaveLength(11)
    } finally {
      disposeWeights(weights)
    }
  })

  it('weight files round-trip and feed the forward pass', () => {
    const weights = generateWeights(3, 7) // through POOL5
    const path = join(workDir, 'w.lcnw')
    try {
      saveWeights(path, weights)
      const back = loadWeights(path)
      try {
        const input = preprocess(join(imageDir, 'img01.png'))
        const a = activations(input, weights, ['POOL5'])
        const b = activations(input, back, ['POOL5'])
        input.dispose()
        expect(Array.from(a.get('POOL5')!)).toEqual(Array.from(b.get('POOL5')!))
      } finally {
        disposeWeights(back)
      }
    } finally {
      disposeWeights(weights)
    }
  })
})

describe('export job', () => {
  it('rejects unknown layers', () => {
    expect(() =>
      exportFeatures({
        imageDir,
        layers: ['POOL9'],
        outDir: join(workDir, 'nope'),
        device: 'cpu',
        seed: 0,
      }),
    ).toThrow(/unknown layer/)
  })

  it('lists images sorted and filtered', () => {
    const files = listImages(imageDir)
    expect(files).toHaveLength(10)
    expect(files[0].endsWith('img00.png')).toBe(true)
  })

  it('10 images x {POOL5, FC6} export under budget with exact dims', () => {
    const started = Date.now()
    const outDir = join(workDir, 'out')
    const written = exportFeatures({
      imageDir,
      layers: ['POOL5', 'FC6'],
      outDir,
      device: 'cpu',
      seed: 0,
    })
    const elapsed = (Date.now() - started) / 1000
    expect(written).toBe(20)
    expect(elapsed).toBeLessThan(300)

    const files = readdirSync(outDir).filter((f) => f.endsWith('.lcdf'))
    expect(files).toHaveLength(20)
    for (const f of files.sort()) {
      const rec = decodeLcdf(readFileSync(join(outDir, f)))
      expect(rec.values.length).toBe(LAYER_DIMS[rec.layer])
      for (const v of rec.values) expect(Number.isFinite(v)).toBe(true)
    }
    const manifest = JSON.parse(
      readFileSync(join(outDir, 'manifest.json'), 'utf-8'),
    )
    expect(manifest.flattening_order).toContain('channel-major')
    expect(manifest.model.weights).toBe('seeded(0)')
  }, 360_000)

  it('re-export is byte-identical', () => {
    const outA = join(workDir, 'detA')
    const outB = join(workDir, 'detB')
    const sub = join(workDir, 'subset')
    require('fs').mkdirSync(sub, { recursive: true })
    for (const f of ['img00.png', 'img01.png']) {
      writeFileSync(join(sub, f), readFileSync(join(imageDir, f)))
    }
    for (const out of [outA, outB]) {
      exportFeatures({
        imageDir: sub,
        layers: ['POOL5'],
        outDir: out,
        device: 'cpu',
        seed: 11,
      })
    }
    for (const f of readdirSync(outA)) {
      expect(readFileSync(join(outA, f)).equals(readFileSync(join(outB, f)))).toBe(
        true,
      )
    }
  }, 360_000)

  it('emitted files pass the consumer-side reader', () => {
    // cross-component check through the installed `loopclose` CLI
    const outDir = join(workDir, 'out') // produced by the budget test above
    const report = execFileSync(
      'loopclose',
      ['import-features', '--input', outDir],
      { encoding: 'utf-8' },
    )
    expect(report).toContain('validated 20 feature files')
    const norm = execFileSync(
      'python3',
      [
        '-c',
        'import sys; from loopclose import read_feature_file; import numpy as np;' +
          `_, _, d = read_feature_file(sys.argv[1]);` +
          'print(d.dim, float(np.linalg.norm(d.values)))',
        join(outDir, 'img00.POOL5.lcdf'),
      ],
      { encoding: 'utf-8' },
    )
    const [dim, n] = norm.trim().split(' ')
    expect(Number(dim)).toBe(9216)
    expect(Math.abs(Number(n) - 1.0)).toBeLessThan(1e-6)
  })
})
