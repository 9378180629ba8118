// Fabricated mini devkit trees for converter tests.

import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'

export function tempDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix))
}

export type NuscenesFixture = {
  root: string
  // per scene name: list of (category, n annotated keyframes)
  annotationCounts: Record<string, Record<string, number>>
}

function quatFromYaw(yaw: number): [number, number, number, number] {
  return [Math.cos(yaw / 2), 0, 0, Math.sin(yaw / 2)]
}

export function buildNuscenesMini(): NuscenesFixture {
  const root = tempDir('nusc-')
  const dir = path.join(root, 'v1.0-mini')
  fs.mkdirSync(dir, { recursive: true })

  const scenes = [
    { token: 'scn1', name: 'scene-0061', first_sample_token: 's1a' },
    { token: 'scn2', name: 'scene-0553', first_sample_token: 's2a' },
    { token: 'scn3', name: 'scene-0103', first_sample_token: 's3a' }, // mini_val
  ]
  const samples = [
    { token: 's1a', scene_token: 'scn1', timestamp: 10_000_000, prev: '', next: 's1b' },
    { token: 's1b', scene_token: 'scn1', timestamp: 10_500_000, prev: 's1a', next: 's1c' },
    { token: 's1c', scene_token: 'scn1', timestamp: 11_000_000, prev: 's1b', next: '' },
    { token: 's2a', scene_token: 'scn2', timestamp: 20_000_000, prev: '', next: 's2b' },
    { token: 's2b', scene_token: 'scn2', timestamp: 20_500_000, prev: 's2a', next: '' },
    { token: 's3a', scene_token: 'scn3', timestamp: 30_000_000, prev: '', next: '' },
  ]
  const categories = [
    { token: 'cat-car', name: 'vehicle.car' },
    { token: 'cat-ped', name: 'human.pedestrian.adult' },
    { token: 'cat-cone', name: 'movable_object.trafficcone' },
  ]
  const instances = [
    { token: 'inst-car1', category_token: 'cat-car' },
    { token: 'inst-car2', category_token: 'cat-car' },
    { token: 'inst-ped1', category_token: 'cat-ped' },
    { token: 'inst-cone', category_token: 'cat-cone' },
  ]
  const ann = (token: string, sample: string, inst: string,
               x: number, y: number, yaw: number) => ({
    token,
    sample_token: sample,
    instance_token: inst,
    translation: [x, y, 0.8] as [number, number, number],
    rotation: quatFromYaw(yaw),
  })
  const annotations = [
    // scene-0061: car1 three keyframes, ped1 two, one cone (excluded by map)
    ann('a1', 's1a', 'inst-car1', 10.0, 5.0, 0.2),
    ann('a2', 's1b', 'inst-car1', 13.0, 5.2, 0.25),
    ann('a3', 's1c', 'inst-car1', 16.0, 5.5, 0.3),
    ann('a4', 's1a', 'inst-ped1', 2.0, -1.0, 1.5),
    ann('a5', 's1b', 'inst-ped1', 2.4, -0.8, 1.5),
    ann('a6', 's1b', 'inst-cone', 0.0, 0.0, 0.0),
    // scene-0553: car2 two keyframes
    ann('a7', 's2a', 'inst-car2', -4.0, 7.0, 3.0),
    ann('a8', 's2b', 'inst-car2', -1.0, 7.3, 3.05),
    // scene-0103 (mini_val): ped1 single keyframe
    ann('a9', 's3a', 'inst-ped1', 1.0, 1.0, -2.0),
  ]

  const write = (name: string, data: unknown) =>
    fs.writeFileSync(path.join(dir, `${name}.json`), JSON.stringify(data))
  write('scene', scenes)
  write('sample', samples)
  write('sample_annotation', annotations)
  write('instance', instances)
  write('category', categories)

  return {
    root,
    annotationCounts: {
      'scene-0061': { 'vehicle.car': 3, 'human.pedestrian.adult': 2 },
      'scene-0553': { 'vehicle.car': 2 },
      'scene-0103': { 'human.pedestrian.adult': 1 },
    },
  }
}

export function buildKittiFixture(): string {
  const root = tempDir('kitti-')
  for (const sub of ['label_02', 'calib', 'oxts']) {
    fs.mkdirSync(path.join(root, sub), { recursive: true })
  }
  // frame track type trunc occl alpha bbox(4) dims(3) loc(3) ry
  const labels = [
    '0 0 Car 0 0 0.0 0 0 50 50 1.5 1.6 4.0 2.0 -1.0 3.0 0.0',
    '0 1 Pedestrian 0 0 0.0 0 0 50 50 1.8 0.6 0.6 -1.0 -1.0 5.0 1.0',
    '0 -1 DontCare -1 -1 -10 0 0 10 10 -1 -1 -1 -1000 -1000 -1000 -10',
    '1 0 Car 0 0 0.0 0 0 50 50 1.5 1.6 4.0 2.5 -1.0 3.5 0.1',
    '1 1 Pedestrian 0 0 0.0 0 0 50 50 1.8 0.6 0.6 -0.8 -1.0 5.2 1.0',
  ]
  fs.writeFileSync(path.join(root, 'label_02', '0000.txt'), labels.join('\n') + '\n')
  const calib = [
    'P0: 1 0 0 0 0 1 0 0 0 0 1 0',
    'R_rect 1 0 0 0 1 0 0 0 1',
    'Tr_velo_cam 1 0 0 0.5 0 1 0 0 0 0 1 0',
    'Tr_imu_velo 1 0 0 0 0 1 0 0 0 0 1 0',
  ]
  fs.writeFileSync(path.join(root, 'calib', '0000.txt'), calib.join('\n') + '\n')
  const pad = Array(24).fill('0').join(' ')
  const oxts = [
    `0 0 0 0 0 0 ${pad}`,
    `0 0 0 0 0 ${Math.PI / 2} ${pad}`,
  ]
  fs.writeFileSync(path.join(root, 'oxts', '0000.txt'), oxts.join('\n') + '\n')
  return root
}
