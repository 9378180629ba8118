// Conversion manifest: what was exported, with per-class and per-sequence
// counts so exports can be audited against the source annotations.

import * as fs from 'fs'
import * as path from 'path'

export type ConversionManifest = {
  dataset: string
  split: string
  class_map: Record<string, number>
  output_files: string[]
  total_records: number
  counts_per_class: Record<string, number>
  counts_per_sequence: Record<string, number>
}

export function emptyManifest(dataset: string, split: string,
                              classMap: Record<string, number>): ConversionManifest {
  return {
    dataset,
    split,
    class_map: classMap,
    output_files: [],
    total_records: 0,
    counts_per_class: {},
    counts_per_sequence: {},
  }
}

export function countRecord(manifest: ConversionManifest, className: string,
                            seqId: string): void {
  manifest.total_records += 1
  manifest.counts_per_class[className] = (manifest.counts_per_class[className] ?? 0) + 1
  manifest.counts_per_sequence[seqId] = (manifest.counts_per_sequence[seqId] ?? 0) + 1
}

export function writeManifest(manifest: ConversionManifest, outPath: string): void {
  const sorted: ConversionManifest = {
    ...manifest,
    counts_per_class: sortKeys(manifest.counts_per_class),
    counts_per_sequence: sortKeys(manifest.counts_per_sequence),
  }
  fs.mkdirSync(path.dirname(outPath), { recursive: true })
  fs.writeFileSync(outPath, JSON.stringify(sorted, null, 2) + '\n')
}

function sortKeys(obj: Record<string, number>): Record<string, number> {
  const out: Record<string, number> = {}
  for (const key of Object.keys(obj).sort()) out[key] = obj[key]
  return out
}
