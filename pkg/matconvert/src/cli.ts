#!/usr/bin/env node
// Usage: matconvert <mat_dir> <out_dir>
// Converts Subject*/a*t*.mat containers into canonical CSVs + manifest.json
// and prints the conversion summary as JSON.

import { convert } from './convert.js'

const [matDir, outDir] = process.argv.slice(2)
if (!matDir || !outDir) {
  console.error('usage: matconvert <mat_dir> <out_dir>')
  process.exit(1)
}

try {
  const summary = convert(matDir, outDir)
  console.log(JSON.stringify(summary, null, 2))
  for (const w of summary.warnings) console.error(`warning: ${w}`)
  process.exit(0)
} catch (e) {
  console.error(`error: ${e instanceof Error ? e.message : e}`)
  process.exit(2)
}
