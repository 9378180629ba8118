// CLI: node dist/export_kitti.js --root <dir> --split <training|all|ids> --out <dir>
//      [--class-map map.json]

import * as fs from 'fs'

import { exportKitti } from './kitti'
import { ClassMap } from './nuscenes'

function parseArgs(argv: string[]): Record<string, string> {
  const out: Record<string, string> = {}
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`usage error near ${key}`)
    }
    out[key.slice(2)] = argv[i + 1]
  }
  return out
}

function main(): number {
  let args: Record<string, string>
  try {
    args = parseArgs(process.argv.slice(2))
    for (const key of ['root', 'split', 'out']) {
      if (!(key in args)) throw new Error(`missing required --${key}`)
    }
  } catch (err) {
    console.error(`usage: export_kitti --root <dir> --split <training|all|id,id> ` +
      `--out <dir> [--class-map map.json] (${(err as Error).message})`)
    return 2
  }
  try {
    let classMap: ClassMap | undefined
    if (args['class-map']) {
      classMap = JSON.parse(fs.readFileSync(args['class-map'], 'utf-8'))
    }
    const manifest = exportKitti({
      root: args.root,
      split: args.split,
      out: args.out,
      classMap,
    })
    console.log(`exported ${manifest.total_records} records from ` +
      `${Object.keys(manifest.counts_per_sequence).length} sequences to ${args.out}`)
    return 0
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    return 1
  }
}

process.exitCode = main()
