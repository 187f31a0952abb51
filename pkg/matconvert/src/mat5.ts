/**
 * Minimal reader for MATLAB level-5 container files (.mat).
 *
 * Supports what the sensor archives actually contain: top-level numeric
 * matrices (any integer/float storage type, column-major), character
 * arrays, and zlib-compressed elements. Cell/struct/sparse variables
 * are surfaced as `kind: "other"` so callers can ignore them.
 */

import * as zlib from 'node:zlib'

const MI = {
  INT8: 1, UINT8: 2, INT16: 3, UINT16: 4, INT32: 5, UINT32: 6,
  SINGLE: 7, DOUBLE: 9, INT64: 12, UINT64: 13,
  MATRIX: 14, COMPRESSED: 15, UTF8: 16, UTF16: 17, UTF32: 18,
} as const

const MX = {
  CELL: 1, STRUCT: 2, OBJECT: 3, CHAR: 4, SPARSE: 5,
  DOUBLE: 6, SINGLE: 7, INT8: 8, UINT8: 9, INT16: 10, UINT16: 11,
  INT32: 12, UINT32: 13, INT64: 14, UINT64: 15,
} as const

export type MatValue =
  | { kind: 'numeric'; dims: number[]; data: Float64Array } // column-major
  | { kind: 'char'; dims: number[]; text: string }
  | { kind: 'other'; dims: number[]; matClass: number }

export interface MatFile {
  header: string
  variables: Map<string, MatValue>
}

export class MatParseError extends Error {}

interface RawElement {
  type: number
  bytes: Buffer
}

class Cursor {
  constructor(readonly buf: Buffer, public off: number, readonly le: boolean) {}

  u32(at: number): number {
    return this.le ? this.buf.readUInt32LE(at) : this.buf.readUInt32BE(at)
  }

  atEnd(): boolean {
    return this.off + 8 > this.buf.length
  }

  /** One tagged data element; handles the packed small-element form. */
  next(): RawElement {
    const word = this.u32(this.off)
    if ((word & 0xffff0000) !== 0) {
      // small element: 16-bit type + 16-bit byte count share the tag word
      const type = word & 0xffff
      const size = word >>> 16
      if (size > 4) throw new MatParseError('small element longer than 4 bytes')
      const bytes = this.buf.subarray(this.off + 4, this.off + 4 + size)
      this.off += 8
      return { type, bytes }
    }
    const type = word
    const size = this.u32(this.off + 4)
    const start = this.off + 8
    if (start + size > this.buf.length) {
      throw new MatParseError('element runs past end of file')
    }
    const bytes = this.buf.subarray(start, start + size)
    // elements pad to 8-byte boundaries, except compressed ones
    const pad = type === MI.COMPRESSED ? 0 : (8 - (size % 8)) % 8
    this.off = start + size + pad
    return { type, bytes }
  }
}

function numericToDoubles(type: number, bytes: Buffer, le: boolean): Float64Array {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength)
  const read = (fn: (off: number, le?: boolean) => number | bigint, width: number) => {
    const n = Math.floor(bytes.byteLength / width)
    const out = new Float64Array(n)
    for (let i = 0; i < n; i++) out[i] = Number(fn.call(view, i * width, le))
    return out
  }
  switch (type) {
    case MI.INT8: return read(view.getInt8, 1)
    case MI.UINT8: return read(view.getUint8, 1)
    case MI.INT16: return read(view.getInt16, 2)
    case MI.UINT16: return read(view.getUint16, 2)
    case MI.INT32: return read(view.getInt32, 4)
    case MI.UINT32: return read(view.getUint32, 4)
    case MI.SINGLE: return read(view.getFloat32, 4)
    case MI.DOUBLE: return read(view.getFloat64, 8)
    case MI.INT64: return read(view.getBigInt64, 8)
    case MI.UINT64: return read(view.getBigUint64, 8)
    default:
      throw new MatParseError(`unsupported numeric storage type ${type}`)
  }
}

function charToString(type: number, bytes: Buffer, le: boolean): string {
  if (type === MI.UTF8) return bytes.toString('utf8')
  if (type === MI.UINT16 || type === MI.UTF16) {
    const codes: number[] = []
    for (let i = 0; i + 1 < bytes.length; i += 2) {
      codes.push(le ? bytes.readUInt16LE(i) : bytes.readUInt16BE(i))
    }
    return String.fromCharCode(...codes)
  }
  if (type === MI.UINT8 || type === MI.INT8) return bytes.toString('latin1')
  throw new MatParseError(`unsupported character storage type ${type}`)
}

function parseMatrix(bytes: Buffer, le: boolean): { name: string; value: MatValue } {
  const cur = new Cursor(bytes, 0, le)
  const flagsEl = cur.next()
  if (flagsEl.type !== MI.UINT32 || flagsEl.bytes.length < 8) {
    throw new MatParseError('matrix is missing its array-flags element')
  }
  const flags = le ? flagsEl.bytes.readUInt32LE(0) : flagsEl.bytes.readUInt32BE(0)
  const matClass = flags & 0xff
  const dimsEl = cur.next()
  const dims = Array.from(numericToDoubles(dimsEl.type, dimsEl.bytes, le), Number)
  const nameEl = cur.next()
  const name = nameEl.bytes.toString('latin1').replace(/\0+$/, '')

  if (matClass === MX.CHAR) {
    const dataEl = cur.next()
    return { name, value: { kind: 'char', dims, text: charToString(dataEl.type, dataEl.bytes, le) } }
  }
  const numericClasses: number[] = [
    MX.DOUBLE, MX.SINGLE, MX.INT8, MX.UINT8, MX.INT16, MX.UINT16,
    MX.INT32, MX.UINT32, MX.INT64, MX.UINT64,
  ]
  if (!numericClasses.includes(matClass)) {
    return { name, value: { kind: 'other', dims, matClass } }
  }
  const dataEl = cur.next()
  const data = numericToDoubles(dataEl.type, dataEl.bytes, le)
  const expected = dims.reduce((a, b) => a * b, 1)
  if (data.length !== expected) {
    throw new MatParseError(`matrix ${name}: ${data.length} values for dims ${dims.join('x')}`)
  }
  return { name, value: { kind: 'numeric', dims, data } }
}

function parseElementInto(el: RawElement, le: boolean, out: Map<string, MatValue>): void {
  if (el.type === MI.COMPRESSED) {
    const inflated = zlib.inflateSync(el.bytes)
    const cur = new Cursor(inflated, 0, le)
    while (!cur.atEnd()) parseElementInto(cur.next(), le, out)
    return
  }
  if (el.type === MI.MATRIX) {
    const { name, value } = parseMatrix(el.bytes, le)
    out.set(name, value)
    return
  }
  // other top-level element kinds (e.g. subsystem data) are irrelevant here
}

/** Parse a level-5 .mat file held in memory. */
export function parseMat(buf: Buffer): MatFile {
  if (buf.length < 128) throw new MatParseError('file shorter than a level-5 header')
  const endian = buf.toString('latin1', 126, 128)
  let le: boolean
  if (endian === 'IM') le = true
  else if (endian === 'MI') le = false
  else throw new MatParseError('missing level-5 endian indicator (not a v5 .mat file?)')
  const version = le ? buf.readUInt16LE(124) : buf.readUInt16BE(124)
  if (version !== 0x0100) {
    throw new MatParseError(`unsupported container version 0x${version.toString(16)}`)
  }
  const header = buf.toString('latin1', 0, 116).replace(/\0.*$/s, '').trimEnd()
  const variables = new Map<string, MatValue>()
  const cur = new Cursor(buf, 128, le)
  while (!cur.atEnd()) parseElementInto(cur.next(), le, variables)
  return { header, variables }
}

/** Column-major numeric matrix as row-major rows. */
export function toRows(value: MatValue & { kind: 'numeric' }): number[][] {
  const [rows, cols] = value.dims.length === 2 ? value.dims : [value.dims[0] ?? 0, 1]
  const out: number[][] = new Array(rows)
  for (let i = 0; i < rows; i++) {
    const row = new Array<number>(cols)
    for (let j = 0; j < cols; j++) row[j] = value.data[j * rows + i]
    out[i] = row
  }
  return out
}
