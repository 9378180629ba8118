// Export nuScenes annotation tables into the canonical detection format.
// Boxes are already annotated in the global frame; keyframes arrive at 2 Hz,
// so per-scene frame indices follow the sample chain and timestamps are
// seconds relative to the scene start.

import * as fs from 'fs'
import * as path from 'path'

import { CanonicalRecord, serializeRecord, wrapAngle, yawFromQuaternion } from './canonical'
import { ConversionManifest, countRecord, emptyManifest, writeManifest } from './manifest'

type Scene = { token: string; name: string; first_sample_token: string }
type Sample = { token: string; scene_token: string; timestamp: number; next: string }
type Annotation = {
  token: string
  sample_token: string
  instance_token: string
  translation: [number, number, number]
  rotation: [number, number, number, number]
}
type Instance = { token: string; category_token: string }
type Category = { token: string; name: string }

// A class map assigns each dataset label an integer id, or null for labels
// that are deliberately excluded. Labels missing from the map abort.
export type ClassMap = Record<string, number | null>

export const DEFAULT_NUSCENES_CLASS_MAP: ClassMap = {
  'vehicle.car': 0,
  'human.pedestrian.adult': 1,
  'human.pedestrian.child': 1,
  'human.pedestrian.construction_worker': 1,
  'human.pedestrian.police_officer': 1,
  'vehicle.bicycle': 2,
  'vehicle.bus.bendy': 3,
  'vehicle.bus.rigid': 3,
  'vehicle.motorcycle': 4,
  'vehicle.trailer': 5,
  'vehicle.truck': 6,
  // present in annotations but not tracked
  'animal': null,
  'human.pedestrian.personal_mobility': null,
  'human.pedestrian.stroller': null,
  'human.pedestrian.wheelchair': null,
  'movable_object.barrier': null,
  'movable_object.debris': null,
  'movable_object.pushable_pullable': null,
  'movable_object.trafficcone': null,
  'static_object.bicycle_rack': null,
  'vehicle.construction': null,
  'vehicle.emergency.ambulance': null,
  'vehicle.emergency.police': null,
}

// Official mini-split scene lists (nuScenes devkit).
export const MINI_TRAIN = [
  'scene-0061', 'scene-0553', 'scene-0655', 'scene-0757', 'scene-0796',
  'scene-1077', 'scene-1094', 'scene-1100',
]
export const MINI_VAL = ['scene-0103', 'scene-0916']

function loadTable<T>(dir: string, name: string, missing: string[]): T[] {
  const file = path.join(dir, `${name}.json`)
  if (!fs.existsSync(file)) {
    missing.push(file)
    return []
  }
  return JSON.parse(fs.readFileSync(file, 'utf-8')) as T[]
}

export type NuscenesExportOptions = {
  root: string
  version?: string // table directory under root, e.g. v1.0-mini
  split: string // mini_train | mini_val | all | path to a JSON scene list
  out: string
  classMap?: ClassMap
}

export function splitSceneNames(split: string): { names: string[] | null; strict: boolean } {
  // Built-in named splits filter to the scenes actually present; an explicit
  // scene-list file must be satisfied completely.
  if (split === 'mini_train') return { names: MINI_TRAIN, strict: false }
  if (split === 'mini_val') return { names: MINI_VAL, strict: false }
  if (split === 'all') return { names: null, strict: false }
  if (fs.existsSync(split)) {
    const names = JSON.parse(fs.readFileSync(split, 'utf-8'))
    if (!Array.isArray(names)) throw new Error(`split file ${split} is not a JSON list`)
    return { names: names.map(String), strict: true }
  }
  throw new Error(`unknown split ${split} (expected mini_train, mini_val, all, or a scene-list file)`)
}

export function exportNuscenes(opts: NuscenesExportOptions): ConversionManifest {
  const version = opts.version ?? 'v1.0-mini'
  const tableDir = path.join(opts.root, version)
  const classMap = opts.classMap ?? DEFAULT_NUSCENES_CLASS_MAP

  const missing: string[] = []
  const scenes = loadTable<Scene>(tableDir, 'scene', missing)
  const samples = loadTable<Sample>(tableDir, 'sample', missing)
  const annotations = loadTable<Annotation>(tableDir, 'sample_annotation', missing)
  const instances = loadTable<Instance>(tableDir, 'instance', missing)
  const categories = loadTable<Category>(tableDir, 'category', missing)
  if (missing.length) {
    throw new Error(`missing nuScenes tables: ${missing.join(', ')}`)
  }

  const { names: wanted, strict } = splitSceneNames(opts.split)
  const selected = scenes
    .filter((s) => wanted === null || wanted.includes(s.name))
    .sort((a, b) => a.name.localeCompare(b.name))
  if (wanted !== null && strict) {
    const have = new Set(selected.map((s) => s.name))
    const absent = wanted.filter((name) => !have.has(name))
    if (absent.length) throw new Error(`split scenes not in dataset: ${absent.join(', ')}`)
  }
  if (!selected.length) throw new Error(`split ${opts.split} selects no scenes`)

  const sampleByToken = new Map(samples.map((s) => [s.token, s]))
  const categoryName = new Map(categories.map((c) => [c.token, c.name]))
  const instanceCategory = new Map<string, string>()
  for (const inst of instances) {
    const name = categoryName.get(inst.category_token)
    if (name === undefined) throw new Error(`instance ${inst.token} has unknown category token`)
    instanceCategory.set(inst.token, name)
  }
  const annsBySample = new Map<string, Annotation[]>()
  for (const ann of annotations) {
    const list = annsBySample.get(ann.sample_token) ?? []
    list.push(ann)
    annsBySample.set(ann.sample_token, list)
  }

  const manifest = emptyManifest('nuscenes', opts.split, compactMap(classMap))
  const lines: string[] = []
  for (const scene of selected) {
    const trackIds = new Map<string, number>()
    let frame = 0
    let t0: number | null = null
    let token = scene.first_sample_token
    while (token) {
      const sample = sampleByToken.get(token)
      if (!sample) throw new Error(`sample ${token} missing from sample table`)
      if (t0 === null) t0 = sample.timestamp
      const anns = (annsBySample.get(token) ?? []).slice()
      anns.sort((a, b) => a.instance_token.localeCompare(b.instance_token))
      for (const ann of anns) {
        const label = instanceCategory.get(ann.instance_token)
        if (label === undefined) {
          throw new Error(`annotation ${ann.token} references unknown instance`)
        }
        if (!(label in classMap)) {
          throw new Error(`unmapped dataset label ${label}; extend the class map`)
        }
        const classId = classMap[label]
        if (classId === null) continue
        if (!trackIds.has(ann.instance_token)) {
          trackIds.set(ann.instance_token, trackIds.size)
        }
        const [w, qx, qy, qz] = ann.rotation
        const rec: CanonicalRecord = {
          seq_id: scene.name,
          frame,
          t: (sample.timestamp - t0) / 1e6,
          x: ann.translation[0],
          y: ann.translation[1],
          yaw: yawFromQuaternion(w, qx, qy, qz),
          class_id: classId,
          score: 1.0,
          gt_track_id: trackIds.get(ann.instance_token),
        }
        lines.push(serializeRecord(rec))
        countRecord(manifest, label, scene.name)
      }
      frame += 1
      token = sample.next
    }
  }

  fs.mkdirSync(opts.out, { recursive: true })
  const dataName = `${safeName(opts.split)}.jsonl`
  fs.writeFileSync(path.join(opts.out, dataName),
                   lines.join('\n') + (lines.length ? '\n' : ''))
  manifest.output_files.push(dataName)  // relative: the manifest travels with the files
  writeManifest(manifest, path.join(opts.out, `${safeName(opts.split)}.manifest.json`))
  return manifest
}

function compactMap(map: ClassMap): Record<string, number> {
  const out: Record<string, number> = {}
  for (const [key, value] of Object.entries(map)) {
    if (value !== null) out[key] = value
  }
  return out
}

function safeName(split: string): string {
  return path.basename(split).replace(/[^A-Za-z0-9_.-]/g, '_').replace(/\.json$/, '')
}
