#!/usr/bin/env node
/**
 * export --images DIR --layers POOL5,FC6 --out DIR [--device cpu|gpu]
 *        [--weights FILE] [--seed N]
 *
 * Writes one `.lcdf` file per (image, layer) plus `manifest.json`.
 */

import { exportFeatures } from './export'

function usage(): never {
  console.error(
    'usage: export --images DIR --layers L1,L2 --out DIR ' +
      '[--device cpu|gpu] [--weights FILE] [--seed N]',
  )
  process.exit(2)
}

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>()
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    if (!key.startsWith('--') || i + 1 >= argv.length) usage()
    args.set(key.slice(2), argv[i + 1])
  }
  return args
}

function main(argv: string[]): number {
  if (argv[0] === 'export') argv = argv.slice(1)
  const args = parseArgs(argv)
  const images = args.get('images')
  const layers = args.get('layers')
  const out = args.get('out')
  if (!images || !layers || !out) usage()
  const device = (args.get('device') ?? 'cpu') as 'cpu' | 'gpu'
  if (device !== 'cpu' && device !== 'gpu') usage()
  try {
    const written = exportFeatures({
      imageDir: images,
      layers: layers.split(',').map((s) => s.trim()).filter(Boolean),
      outDir: out,
      device,
      weightsPath: args.get('weights'),
      seed: Number(args.get('seed') ?? '0'),
    })
    console.log(`wrote ${written} feature files to ${out}`)
    return 0
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 1
  }
}

process.exit(main(process.argv.slice(2)))
