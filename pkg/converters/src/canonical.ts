// Canonical detection format shared with the tracker: UTF-8 newline-delimited
// JSON, one object per line, keys exactly seq_id, frame, t, x, y, yaw,
// class_id, score plus optional gt_track_id. Angles radians in (-pi, pi],
// distances meters, time seconds, one fixed world frame per sequence.

export type CanonicalRecord = {
  seq_id: string
  frame: number
  t: number
  x: number
  y: number
  yaw: number
  class_id: number
  score: number
  gt_track_id?: number
}

const REQUIRED_KEYS = ['seq_id', 'frame', 't', 'x', 'y', 'yaw', 'class_id', 'score'] as const
const OPTIONAL_KEYS = ['gt_track_id'] as const

export function wrapAngle(a: number): number {
  if (!Number.isFinite(a)) throw new Error(`cannot wrap non-finite angle ${a}`)
  let r = a - 2 * Math.PI * Math.ceil((a - Math.PI) / (2 * Math.PI))
  if (r <= -Math.PI) r += 2 * Math.PI
  else if (r > Math.PI) r -= 2 * Math.PI
  return r
}

export function serializeRecord(rec: CanonicalRecord): string {
  const obj: Record<string, unknown> = {
    seq_id: rec.seq_id,
    frame: rec.frame,
    t: rec.t,
    x: rec.x,
    y: rec.y,
    yaw: rec.yaw,
    class_id: rec.class_id,
    score: rec.score,
  }
  if (rec.gt_track_id !== undefined) obj.gt_track_id = rec.gt_track_id
  return JSON.stringify(obj)
}

export type ValidationIssue = { line: number; message: string }

export function parseRecord(line: string, lineno: number): CanonicalRecord {
  let obj: unknown
  try {
    obj = JSON.parse(line)
  } catch (err) {
    throw new Error(`line ${lineno}: invalid JSON (${(err as Error).message})`)
  }
  if (typeof obj !== 'object' || obj === null || Array.isArray(obj)) {
    throw new Error(`line ${lineno}: record is not an object`)
  }
  const rec = obj as Record<string, unknown>
  for (const key of REQUIRED_KEYS) {
    if (!(key in rec)) throw new Error(`line ${lineno}: missing key ${key}`)
  }
  const allowed = new Set<string>([...REQUIRED_KEYS, ...OPTIONAL_KEYS])
  for (const key of Object.keys(rec)) {
    if (!allowed.has(key)) throw new Error(`line ${lineno}: unexpected key ${key}`)
  }
  const num = (key: string): number => {
    const v = rec[key]
    if (typeof v !== 'number' || !Number.isFinite(v)) {
      throw new Error(`line ${lineno}: ${key} is not a finite number`)
    }
    return v
  }
  const out: CanonicalRecord = {
    seq_id: String(rec.seq_id),
    frame: num('frame'),
    t: num('t'),
    x: num('x'),
    y: num('y'),
    yaw: num('yaw'),
    class_id: num('class_id'),
    score: num('score'),
  }
  if (rec.gt_track_id !== undefined) out.gt_track_id = num('gt_track_id')
  if (!Number.isInteger(out.frame) || out.frame < 0) {
    throw new Error(`line ${lineno}: frame must be a non-negative integer`)
  }
  if (out.score < 0 || out.score > 1) {
    throw new Error(`line ${lineno}: score ${out.score} outside [0, 1]`)
  }
  if (out.yaw <= -Math.PI || out.yaw > Math.PI) {
    throw new Error(`line ${lineno}: yaw ${out.yaw} outside (-pi, pi]`)
  }
  return out
}

// Full-file validation mirroring the tracker-side parser: strict keys per
// record plus per-sequence frame/timestamp monotonicity.
export function validateCanonical(text: string): { records: CanonicalRecord[]; issues: ValidationIssue[] } {
  const records: CanonicalRecord[] = []
  const issues: ValidationIssue[] = []
  const last = new Map<string, { frame: number; t: number }>()
  const lines = text.split(/\r?\n/)
  lines.forEach((raw, idx) => {
    const line = raw.trim()
    if (!line) return
    const lineno = idx + 1
    let rec: CanonicalRecord
    try {
      rec = parseRecord(line, lineno)
    } catch (err) {
      issues.push({ line: lineno, message: (err as Error).message })
      return
    }
    const prev = last.get(rec.seq_id)
    if (prev) {
      if (rec.frame < prev.frame) {
        issues.push({ line: lineno, message: `non-monotone frame indices in sequence ${rec.seq_id}` })
      } else if (rec.frame === prev.frame && rec.t !== prev.t) {
        issues.push({ line: lineno, message: `inconsistent timestamps for frame ${rec.frame} in sequence ${rec.seq_id}` })
      } else if (rec.frame > prev.frame && rec.t <= prev.t) {
        issues.push({ line: lineno, message: `non-monotone timestamps in sequence ${rec.seq_id}` })
      }
    }
    last.set(rec.seq_id, { frame: rec.frame, t: rec.t })
    records.push(rec)
  })
  return { records, issues }
}

export function yawFromQuaternion(w: number, x: number, y: number, z: number): number {
  // Heading around +z of a [w, x, y, z] quaternion.
  return wrapAngle(Math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z)))
}
