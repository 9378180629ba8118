import * as fs from 'fs'
import * as path from 'path'

import { describe, expect, it } from 'vitest'

import { validateCanonical } from '../src/canonical'
import { exportKitti, parseCalib, parseOxts } from '../src/kitti'
import { buildKittiFixture, tempDir } from './fixtures'

describe('exportKitti', () => {
  // Fixture geometry: R_rect = I, Tr_velo_cam = translate(+0.5 x),
  // Tr_imu_velo = I; oxts poses: frame 0 identity, frame 1 yaw +pi/2 at the
  // origin. Hand oracle: p_imu = loc - (0.5, 0, 0); world = Rz(yaw) p_imu.
  it('transforms boxes through rect -> velo -> imu -> world', () => {
    const root = buildKittiFixture()
    const out = tempDir('kitti-out-')
    exportKitti({ root, split: 'all', out })
    const { records, issues } = validateCanonical(
      fs.readFileSync(path.join(out, 'all.jsonl'), 'utf-8'))
    expect(issues).toEqual([])

    const car0 = records.find((r) => r.frame === 0 && r.class_id === 0)!
    expect(car0.x).toBeCloseTo(2.0 - 0.5, 12)
    expect(car0.y).toBeCloseTo(-1.0, 6)
    expect(car0.yaw).toBeCloseTo(0.0, 6)
    expect(car0.t).toBe(0.0)

    const car1 = records.find((r) => r.frame === 1 && r.class_id === 0)!
    // p_imu = (2.0, -1.0); Rz(pi/2): (x, y) -> (-y, x)
    expect(car1.x).toBeCloseTo(1.0, 6)
    expect(car1.y).toBeCloseTo(2.0, 6)
    expect(car1.yaw).toBeCloseTo(Math.PI / 2 + 0.1 * 0, 6) // ry=0.1 spins in-camera
    expect(car1.t).toBeCloseTo(0.1, 12)
  })

  it('skips DontCare and keeps native track ids', () => {
    const root = buildKittiFixture()
    const out = tempDir('kitti-out-')
    const manifest = exportKitti({ root, split: 'all', out })
    expect(manifest.total_records).toBe(4)
    expect(manifest.counts_per_class).toEqual({ Car: 2, Pedestrian: 2 })
    const { records } = validateCanonical(
      fs.readFileSync(path.join(out, 'all.jsonl'), 'utf-8'))
    expect(new Set(records.map((r) => r.gt_track_id))).toEqual(new Set([0, 1]))
  })

  it('is deterministic across repeated exports', () => {
    const root = buildKittiFixture()
    const out1 = tempDir('k1-')
    const out2 = tempDir('k2-')
    exportKitti({ root, split: 'all', out: out1 })
    exportKitti({ root, split: 'all', out: out2 })
    expect(fs.readFileSync(path.join(out1, 'all.jsonl'), 'utf-8'))
      .toBe(fs.readFileSync(path.join(out2, 'all.jsonl'), 'utf-8'))
  })

  it('errors listing every missing file', () => {
    const root = buildKittiFixture()
    fs.rmSync(path.join(root, 'oxts', '0000.txt'))
    expect(() => exportKitti({ root, split: 'all', out: tempDir('o-') }))
      .toThrow(/missing KITTI files.*oxts/)
  })

  it('aborts on unmapped labels', () => {
    const root = buildKittiFixture()
    expect(() => exportKitti({
      root, split: 'all', out: tempDir('o-'),
      classMap: { Car: 0 },
    })).toThrow(/unmapped dataset label Pedestrian/)
  })
})

describe('parseCalib', () => {
  it('accepts devkit key spelling variants', () => {
    const text = ['R0_rect 1 0 0 0 1 0 0 0 1',
                  'Tr_velo_to_cam 1 0 0 0 0 1 0 0 0 0 1 0',
                  'Tr_imu_to_velo 1 0 0 0 0 1 0 0 0 0 1 0'].join('\n')
    const calib = parseCalib(text)
    expect(calib.rectToVelo[0][3]).toBeCloseTo(0, 12)
  })

  it('reports the missing key', () => {
    expect(() => parseCalib('P0: 1 0')).toThrow(/R_rect/)
  })
})

describe('parseOxts', () => {
  it('maps the first frame to the mercator origin at lat/lon 0', () => {
    const pad = Array(24).fill('0').join(' ')
    const poses = parseOxts(`0 0 0 0 0 0 ${pad}`)
    expect(poses[0].t[0]).toBeCloseTo(0, 6)
    expect(poses[0].t[1]).toBeCloseTo(0, 6)
  })

  it('moves east with longitude', () => {
    const pad = Array(24).fill('0').join(' ')
    const lonDeg = (5 * 180) / (Math.PI * 6378137) // ~5 m east
    const poses = parseOxts([`0 0 0 0 0 0 ${pad}`, `0 ${lonDeg} 0 0 0 0 ${pad}`].join('\n'))
    expect(poses[1].t[0]).toBeCloseTo(5.0, 6)
  })
})
