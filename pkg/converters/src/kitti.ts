// Export KITTI tracking labels into the canonical detection format.
// Label boxes live in rectified camera coordinates; the chain
// rect -> camera -> velodyne -> IMU -> world (oxts mercator pose) moves them
// into one fixed world frame per sequence. Native rate is 10 Hz, so the
// tracker should run these files with a 0.1 s frame period.

import * as fs from 'fs'
import * as path from 'path'

import { CanonicalRecord, serializeRecord, wrapAngle } from './canonical'
import { ConversionManifest, countRecord, emptyManifest, writeManifest } from './manifest'
import { ClassMap } from './nuscenes'

export const DEFAULT_KITTI_CLASS_MAP: ClassMap = {
  Car: 0,
  Pedestrian: 1,
  Cyclist: 2,
  Van: null,
  Truck: null,
  Person: null,
  Person_sitting: null,
  Tram: null,
  Misc: null,
}

const EARTH_RADIUS_M = 6378137.0
const FRAME_PERIOD_S = 0.1

type Mat = number[][] // row-major

function matMul(a: Mat, b: Mat): Mat {
  const out: Mat = []
  for (let i = 0; i < a.length; i++) {
    out.push([])
    for (let j = 0; j < b[0].length; j++) {
      let s = 0
      for (let k = 0; k < b.length; k++) s += a[i][k] * b[k][j]
      out[i].push(s)
    }
  }
  return out
}

function identity4(): Mat {
  return [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
}

function invertRigid(m: Mat): Mat {
  // Inverse of a rigid [R | t; 0 0 0 1] transform.
  const r = [[m[0][0], m[1][0], m[2][0]],
             [m[0][1], m[1][1], m[2][1]],
             [m[0][2], m[1][2], m[2][2]]]
  const t = [m[0][3], m[1][3], m[2][3]]
  const out = identity4()
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) out[i][j] = r[i][j]
    out[i][3] = -(r[i][0] * t[0] + r[i][1] * t[1] + r[i][2] * t[2])
  }
  return out
}

function apply(m: Mat, p: [number, number, number]): [number, number, number] {
  return [
    m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3],
    m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3],
    m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3],
  ]
}

function applyRot(m: Mat, v: [number, number, number]): [number, number, number] {
  return [
    m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
    m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
    m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
  ]
}

export function parseCalib(text: string): { rectToVelo: Mat; veloToImu: Mat } {
  const rows = new Map<string, number[]>()
  for (const raw of text.split(/\r?\n/)) {
    const line = raw.trim()
    if (!line) continue
    const [key, ...rest] = line.split(/[:\s]+/)
    rows.set(key, rest.map(Number))
  }
  const pick = (...names: string[]): number[] => {
    for (const name of names) {
      const v = rows.get(name)
      if (v) return v
    }
    throw new Error(`calib file lacks ${names.join('/')}`)
  }
  const rect = pick('R_rect', 'R0_rect')
  const veloCam = pick('Tr_velo_cam', 'Tr_velo_to_cam')
  const imuVelo = pick('Tr_imu_velo', 'Tr_imu_to_velo')
  const rRect = identity4()
  for (let i = 0; i < 3; i++) for (let j = 0; j < 3; j++) rRect[i][j] = rect[3 * i + j]
  const trVeloCam = identity4()
  const trImuVelo = identity4()
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 4; j++) {
      trVeloCam[i][j] = veloCam[4 * i + j]
      trImuVelo[i][j] = imuVelo[4 * i + j]
    }
  }
  return {
    rectToVelo: matMul(invertRigid(trVeloCam), invertRigid(rRect)),
    veloToImu: invertRigid(trImuVelo),
  }
}

export type OxtsPose = { rot: Mat; t: [number, number, number] }

export function parseOxts(text: string): OxtsPose[] {
  const lines = text.split(/\r?\n/).map((l) => l.trim()).filter(Boolean)
  if (!lines.length) throw new Error('empty oxts file')
  const first = lines[0].split(/\s+/).map(Number)
  const scale = Math.cos((first[0] * Math.PI) / 180)
  return lines.map((line) => {
    const v = line.split(/\s+/).map(Number)
    const [lat, lon, alt, roll, pitch, yaw] = v
    const x = scale * EARTH_RADIUS_M * ((lon * Math.PI) / 180)
    const y = scale * EARTH_RADIUS_M * Math.log(Math.tan(Math.PI / 4 + (lat * Math.PI) / 360))
    const cr = Math.cos(roll), sr = Math.sin(roll)
    const cp = Math.cos(pitch), sp = Math.sin(pitch)
    const cy = Math.cos(yaw), sy = Math.sin(yaw)
    const rot: Mat = [
      [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
      [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
      [-sp, cp * sr, cp * cr],
    ]
    return { rot, t: [x, y, alt] }
  })
}

type Label = {
  frame: number
  trackId: number
  type: string
  location: [number, number, number]
  rotationY: number
}

export function parseLabels(text: string): Label[] {
  const out: Label[] = []
  for (const raw of text.split(/\r?\n/)) {
    const line = raw.trim()
    if (!line) continue
    const f = line.split(/\s+/)
    if (f.length < 17) throw new Error(`malformed label line: ${line}`)
    out.push({
      frame: Number(f[0]),
      trackId: Number(f[1]),
      type: f[2],
      location: [Number(f[13]), Number(f[14]), Number(f[15])],
      rotationY: Number(f[16]),
    })
  }
  return out
}

export type KittiExportOptions = {
  root: string
  split: string // training | a comma list of sequence ids | all
  out: string
  classMap?: ClassMap
}

export function exportKitti(opts: KittiExportOptions): ConversionManifest {
  const classMap = opts.classMap ?? DEFAULT_KITTI_CLASS_MAP
  const labelDir = path.join(opts.root, 'label_02')
  if (!fs.existsSync(labelDir)) throw new Error(`missing directory: ${labelDir}`)
  let seqIds: string[]
  if (opts.split === 'all' || opts.split === 'training') {
    seqIds = fs.readdirSync(labelDir)
      .filter((f) => f.endsWith('.txt'))
      .map((f) => f.replace(/\.txt$/, ''))
      .sort()
  } else {
    seqIds = opts.split.split(',').map((s) => s.trim()).filter(Boolean)
  }
  if (!seqIds.length) throw new Error(`split ${opts.split} selects no sequences`)

  const missing: string[] = []
  for (const seq of seqIds) {
    for (const file of [path.join(labelDir, `${seq}.txt`),
                        path.join(opts.root, 'calib', `${seq}.txt`),
                        path.join(opts.root, 'oxts', `${seq}.txt`)]) {
      if (!fs.existsSync(file)) missing.push(file)
    }
  }
  if (missing.length) throw new Error(`missing KITTI files: ${missing.join(', ')}`)

  const manifest = emptyManifest('kitti', opts.split, compact(classMap))
  const lines: string[] = []
  for (const seq of seqIds) {
    const calib = parseCalib(fs.readFileSync(path.join(opts.root, 'calib', `${seq}.txt`), 'utf-8'))
    const poses = parseOxts(fs.readFileSync(path.join(opts.root, 'oxts', `${seq}.txt`), 'utf-8'))
    const labels = parseLabels(fs.readFileSync(path.join(labelDir, `${seq}.txt`), 'utf-8'))
    labels.sort((a, b) => a.frame - b.frame || a.trackId - b.trackId)
    const rectToImu = matMul(calib.veloToImu, calib.rectToVelo)
    for (const label of labels) {
      if (label.type === 'DontCare') continue
      if (!(label.type in classMap)) {
        throw new Error(`unmapped dataset label ${label.type}; extend the class map`)
      }
      const classId = classMap[label.type]
      if (classId === null) continue
      const pose = poses[label.frame]
      if (!pose) throw new Error(`sequence ${seq} frame ${label.frame} has no oxts pose`)
      const pImu = apply(rectToImu, label.location)
      const pWorld = [
        pose.rot[0][0] * pImu[0] + pose.rot[0][1] * pImu[1] + pose.rot[0][2] * pImu[2] + pose.t[0],
        pose.rot[1][0] * pImu[0] + pose.rot[1][1] * pImu[1] + pose.rot[1][2] * pImu[2] + pose.t[1],
      ]
      // Heading: rotation_y spins around the rectified camera's down axis;
      // push the forward direction through the same chain.
      const dirRect: [number, number, number] = [Math.cos(label.rotationY), 0, -Math.sin(label.rotationY)]
      const dirImu = applyRot(rectToImu, dirRect)
      const dirWorld = applyRot(pose.rot, dirImu)
      const rec: CanonicalRecord = {
        seq_id: `kitti-${seq}`,
        frame: label.frame,
        t: label.frame * FRAME_PERIOD_S,
        x: pWorld[0],
        y: pWorld[1],
        yaw: wrapAngle(Math.atan2(dirWorld[1], dirWorld[0])),
        class_id: classId,
        score: 1.0,
        gt_track_id: label.trackId,
      }
      lines.push(serializeRecord(rec))
      countRecord(manifest, label.type, `kitti-${seq}`)
    }
  }

  fs.mkdirSync(opts.out, { recursive: true })
  const safe = opts.split.replace(/[^A-Za-z0-9_.-]/g, '_')
  const dataName = `${safe}.jsonl`
  fs.writeFileSync(path.join(opts.out, dataName),
                   lines.join('\n') + (lines.length ? '\n' : ''))
  manifest.output_files.push(dataName)
  writeManifest(manifest, path.join(opts.out, `${safe}.manifest.json`))
  return manifest
}

function compact(map: ClassMap): Record<string, number> {
  const out: Record<string, number> = {}
  for (const [key, value] of Object.entries(map)) {
    if (value !== null) out[key] = value
  }
  return out
}
