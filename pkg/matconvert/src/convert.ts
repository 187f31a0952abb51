/**
 * Converts a directory tree of per-trial MATLAB containers
 * (`Subject<N>/a<A>t<T>.mat`) into the canonical recording layout the
 * training pipeline consumes: one CSV per recording with header
 * `t,ax,ay,az,gx,gy,gz` plus a `manifest.json`.
 *
 * Field names vary across archive versions, so each piece of metadata
 * is probed through the documented alternatives, falling back to the
 * file/directory naming scheme; the summary reports which variant every
 * recording used. Values are written with 9 significant digits, which
 * round-trips the sensors' 32-bit precision losslessly.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { MatParseError, MatValue, parseMat, toRows } from './mat5.js'

export const ACTIVITY_CLASSES = [
  'walking-forward', 'walking-left', 'walking-right', 'walking-upstairs',
  'walking-downstairs', 'running-forward', 'jumping', 'sitting',
  'standing', 'sleeping', 'elevator-up', 'elevator-down',
] as const

export const SAMPLE_RATE_HZ = 100

const READINGS_FIELDS = ['sensor_readings', 'readings']
const ACTIVITY_FIELDS = ['activity_number', 'activity_num', 'activity_numbr']
const TRIAL_FIELDS = ['trial', 'trial_number']

export interface ConversionSummary {
  recordings: number
  subjects: number
  activities: number
  trials: number
  warnings: string[]
  fieldVariants: Record<string, number> // which probe satisfied each lookup
}

interface ManifestEntry {
  id: string
  subject: number
  activity: string
  trial: number
  path: string
}

/** 9 significant digits, trailing zeros trimmed; exact for float32 sources. */
export function fmt9(v: number): string {
  if (!Number.isFinite(v)) throw new RangeError(`non-finite sample value ${v}`)
  if (v === 0) return '0'
  const s = v.toPrecision(9)
  const [mantissa, exponent] = s.split('e')
  let m = mantissa
  if (m.includes('.')) m = m.replace(/0+$/, '').replace(/\.$/, '')
  return exponent === undefined ? m : `${m}e${exponent}`
}

function asInt(value: MatValue | undefined): number | undefined {
  if (!value) return undefined
  if (value.kind === 'numeric' && value.data.length >= 1) return Math.trunc(value.data[0])
  if (value.kind === 'char') {
    const n = parseInt(value.text.trim(), 10)
    return Number.isNaN(n) ? undefined : n
  }
  return undefined
}

function probeInt(
  vars: Map<string, MatValue>, names: string[], fallback: () => number | undefined,
  variants: Record<string, number>, tag: string,
): number | undefined {
  for (const name of names) {
    const got = asInt(vars.get(name))
    if (got !== undefined) {
      variants[`${tag}:${name}`] = (variants[`${tag}:${name}`] ?? 0) + 1
      return got
    }
  }
  const fb = fallback()
  if (fb !== undefined) variants[`${tag}:filename`] = (variants[`${tag}:filename`] ?? 0) + 1
  return fb
}

function listMatFiles(matDir: string): { file: string; subjectDir: string }[] {
  const out: { file: string; subjectDir: string }[] = []
  const subjects = fs.readdirSync(matDir, { withFileTypes: true })
    .filter((d) => d.isDirectory() && /^subject\s*\d+$/i.test(d.name))
    .sort((a, b) => Number(a.name.replace(/\D+/g, '')) - Number(b.name.replace(/\D+/g, '')))
  for (const dir of subjects) {
    const full = path.join(matDir, dir.name)
    const files = fs.readdirSync(full).filter((f) => f.toLowerCase().endsWith('.mat')).sort()
    for (const f of files) out.push({ file: path.join(full, f), subjectDir: dir.name })
  }
  return out
}

export function convert(matDir: string, outDir: string): ConversionSummary {
  const entries = listMatFiles(matDir)
  if (entries.length === 0) {
    throw new Error(`no Subject*/..*.mat files under ${matDir}`)
  }
  fs.mkdirSync(path.join(outDir, 'csv'), { recursive: true })

  const summary: ConversionSummary = {
    recordings: 0, subjects: 0, activities: 0, trials: 0,
    warnings: [], fieldVariants: {},
  }
  const manifest: ManifestEntry[] = []
  const subjects = new Set<number>()
  const activities = new Set<number>()
  const trials = new Set<number>()

  for (const { file, subjectDir } of entries) {
    const rel = path.relative(matDir, file)
    const nameMatch = path.basename(file).match(/a\s*(\d+)\s*t\s*(\d+)/i)
    let vars: Map<string, MatValue>
    try {
      vars = parseMat(fs.readFileSync(file)).variables
    } catch (e) {
      const reason = e instanceof MatParseError ? e.message : String(e)
      summary.warnings.push(`${rel}: unreadable container (${reason}); skipped`)
      continue
    }

    let readings: (MatValue & { kind: 'numeric' }) | undefined
    for (const name of READINGS_FIELDS) {
      const v = vars.get(name)
      if (v && v.kind === 'numeric') {
        readings = v
        summary.fieldVariants[`readings:${name}`] =
          (summary.fieldVariants[`readings:${name}`] ?? 0) + 1
        break
      }
    }
    if (!readings) {
      summary.warnings.push(`${rel}: no sensor-readings matrix; skipped`)
      continue
    }
    if (readings.dims.length !== 2 || readings.dims[1] < 6) {
      summary.warnings.push(
        `${rel}: readings are ${readings.dims.join('x')}, need N x >=6; skipped`)
      continue
    }

    const subject = probeInt(vars, ['subject'],
      () => {
        const m = subjectDir.match(/(\d+)/)
        return m ? Number(m[1]) : undefined
      }, summary.fieldVariants, 'subject')
    const activityNo = probeInt(vars, ACTIVITY_FIELDS,
      () => (nameMatch ? Number(nameMatch[1]) : undefined),
      summary.fieldVariants, 'activity')
    const trial = probeInt(vars, TRIAL_FIELDS,
      () => (nameMatch ? Number(nameMatch[2]) : undefined),
      summary.fieldVariants, 'trial')

    if (subject === undefined || activityNo === undefined || trial === undefined) {
      summary.warnings.push(`${rel}: missing subject/activity/trial metadata; skipped`)
      continue
    }
    if (activityNo < 1 || activityNo > ACTIVITY_CLASSES.length) {
      summary.warnings.push(`${rel}: activity number ${activityNo} outside 1..12; skipped`)
      continue
    }

    const rows = toRows(readings)
    const id = `s${String(subject).padStart(2, '0')}` +
      `a${String(activityNo).padStart(2, '0')}t${trial}`
    const csvRel = path.join('csv', `${id}.csv`)
    const lines: string[] = ['t,ax,ay,az,gx,gy,gz']
    for (let i = 0; i < rows.length; i++) {
      const r = rows[i]
      lines.push([
        fmt9(i / SAMPLE_RATE_HZ),
        fmt9(r[0]), fmt9(r[1]), fmt9(r[2]), // accelerometer, g
        fmt9(r[3]), fmt9(r[4]), fmt9(r[5]), // gyroscope, deg/s (magnetometer columns, if any, dropped)
      ].join(','))
    }
    fs.writeFileSync(path.join(outDir, csvRel), lines.join('\n') + '\n')

    manifest.push({
      id, subject, activity: ACTIVITY_CLASSES[activityNo - 1], trial, path: csvRel,
    })
    subjects.add(subject)
    activities.add(activityNo)
    trials.add(trial)
    summary.recordings += 1
  }

  manifest.sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0))
  const manifestDoc = {
    dataset: 'usc-had',
    sample_rate_hz: SAMPLE_RATE_HZ,
    classes: ACTIVITY_CLASSES,
    recordings: manifest,
  }
  fs.writeFileSync(path.join(outDir, 'manifest.json'),
    JSON.stringify(manifestDoc, null, 1) + '\n')

  summary.subjects = subjects.size
  summary.activities = activities.size
  summary.trials = trials.size
  return summary
}
