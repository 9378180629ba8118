import * as fs from 'fs'
import * as path from 'path'

import { describe, expect, it } from 'vitest'

import { validateCanonical } from '../src/canonical'
import { DEFAULT_NUSCENES_CLASS_MAP, exportNuscenes } from '../src/nuscenes'
import { buildNuscenesMini, tempDir } from './fixtures'

describe('exportNuscenes', () => {
  it('round-trips the mini split with zero validation errors', () => {
    const fixture = buildNuscenesMini()
    const out = tempDir('nusc-out-')
    const manifest = exportNuscenes({ root: fixture.root, split: 'mini_train', out })

    const text = fs.readFileSync(path.join(out, 'mini_train.jsonl'), 'utf-8')
    const { records, issues } = validateCanonical(text)
    expect(issues).toEqual([])

    // timestamps strictly increase within each sequence (2 Hz keyframes)
    const lastT = new Map<string, number>()
    for (const rec of records) {
      const prev = lastT.get(rec.seq_id)
      if (prev !== undefined && rec.frame > 0) expect(rec.t).toBeGreaterThanOrEqual(prev)
      lastT.set(rec.seq_id, rec.t)
    }

    // manifest counts match the fixture's annotation counts exactly
    const expectTotal = Object.entries(fixture.annotationCounts)
      .filter(([scene]) => scene !== 'scene-0103')
    let total = 0
    const perClass: Record<string, number> = {}
    const perSeq: Record<string, number> = {}
    for (const [scene, classes] of expectTotal) {
      for (const [cls, n] of Object.entries(classes)) {
        total += n
        perClass[cls] = (perClass[cls] ?? 0) + n
        perSeq[scene] = (perSeq[scene] ?? 0) + n
      }
    }
    expect(manifest.total_records).toBe(total)
    expect(manifest.counts_per_class).toEqual(perClass)
    expect(manifest.counts_per_sequence).toEqual(perSeq)
    expect(records).toHaveLength(total)
  })

  it('keeps the split boundary: mini_val scenes only in mini_val', () => {
    const fixture = buildNuscenesMini()
    const out = tempDir('nusc-out-')
    exportNuscenes({ root: fixture.root, split: 'mini_val', out })
    const text = fs.readFileSync(path.join(out, 'mini_val.jsonl'), 'utf-8')
    const { records } = validateCanonical(text)
    expect(new Set(records.map((r) => r.seq_id))).toEqual(new Set(['scene-0103']))
  })

  it('is byte-identical across repeated exports', () => {
    const fixture = buildNuscenesMini()
    const out1 = tempDir('nusc-out-')
    const out2 = tempDir('nusc-out-')
    exportNuscenes({ root: fixture.root, split: 'mini_train', out: out1 })
    exportNuscenes({ root: fixture.root, split: 'mini_train', out: out2 })
    for (const name of ['mini_train.jsonl', 'mini_train.manifest.json']) {
      expect(fs.readFileSync(path.join(out1, name), 'utf-8'))
        .toBe(fs.readFileSync(path.join(out2, name), 'utf-8'))
    }
  })

  it('assigns dense per-sequence track ids and preserves identity', () => {
    const fixture = buildNuscenesMini()
    const out = tempDir('nusc-out-')
    exportNuscenes({ root: fixture.root, split: 'mini_train', out })
    const { records } = validateCanonical(
      fs.readFileSync(path.join(out, 'mini_train.jsonl'), 'utf-8'))
    const scene61 = records.filter((r) => r.seq_id === 'scene-0061')
    const carIds = new Set(scene61.filter((r) => r.class_id === 0).map((r) => r.gt_track_id))
    const pedIds = new Set(scene61.filter((r) => r.class_id === 1).map((r) => r.gt_track_id))
    expect(carIds.size).toBe(1)
    expect(pedIds.size).toBe(1)
    const all = [...carIds, ...pedIds].sort()
    expect(all).toEqual([0, 1])
  })

  it('converts quaternions to wrapped planar yaw', () => {
    const fixture = buildNuscenesMini()
    const out = tempDir('nusc-out-')
    exportNuscenes({ root: fixture.root, split: 'mini_train', out })
    const { records } = validateCanonical(
      fs.readFileSync(path.join(out, 'mini_train.jsonl'), 'utf-8'))
    const first = records.find((r) => r.seq_id === 'scene-0061' && r.class_id === 0 && r.frame === 0)
    expect(first?.yaw).toBeCloseTo(0.2, 10)
  })

  it('errors on missing tables, listing the files', () => {
    const root = tempDir('nusc-bad-')
    fs.mkdirSync(path.join(root, 'v1.0-mini'), { recursive: true })
    fs.writeFileSync(path.join(root, 'v1.0-mini', 'scene.json'), '[]')
    expect(() => exportNuscenes({ root, split: 'all', out: tempDir('o-') }))
      .toThrow(/missing nuScenes tables.*sample\.json/)
  })

  it('aborts on labels missing from the class map', () => {
    const fixture = buildNuscenesMini()
    const incomplete = { ...DEFAULT_NUSCENES_CLASS_MAP }
    delete (incomplete as Record<string, unknown>)['movable_object.trafficcone']
    expect(() => exportNuscenes({
      root: fixture.root, split: 'mini_train', out: tempDir('o-'),
      classMap: incomplete,
    })).toThrow(/unmapped dataset label movable_object.trafficcone/)
  })

  it('rejects splits naming scenes the dataset lacks', () => {
    const fixture = buildNuscenesMini()
    const listFile = path.join(tempDir('split-'), 'scenes.json')
    fs.writeFileSync(listFile, JSON.stringify(['scene-0061', 'scene-9999']))
    expect(() => exportNuscenes({ root: fixture.root, split: listFile, out: tempDir('o-') }))
      .toThrow(/scene-9999/)
  })
})
