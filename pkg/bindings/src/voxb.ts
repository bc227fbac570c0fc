/**
 * Bit-exact I/O for VOXB volumetric grid files.
 *
 * Layout (all multi-byte values little-endian): magic "VOXB", u32
 * version = 1, u32 channels, u32 nx/ny/nz, f64 spacing, 3 x f64 origin,
 * u32 tag byte length + UTF-8 tag, then channels*nx*ny*nz f32 values,
 * channel-major and x,y,z row-major (z fastest).
 *
 * Payload bytes pass through untouched in both directions, so round
 * trips preserve every f32 bit pattern, including negative zero and
 * denormals.
 */

import * as fs from 'fs';

const MAGIC = 'VOXB';
const VERSION = 1;
const HEADER_FIXED = 60; // magic..origin plus the tag length field

/** One grid as seen across the boundary: metadata plus a flat Float32Array. */
export interface GridView {
  /** Shape (channels, nx, ny, nz). */
  shape: [number, number, number, number];
  /** Voxel edge length in Angstrom. */
  spacing: number;
  /** World position of the center of voxel (0, 0, 0). */
  origin: [number, number, number];
  /** Free-form provenance tag from the file. */
  sourceTag: string;
  /** C-contiguous values; index ((c*nx + i)*ny + j)*nz + k. */
  data: Float32Array;
}

export class VoxbFormatError extends Error {
  constructor(message: string, readonly offset: number) {
    super(`${message} (at byte offset ${offset})`);
    this.name = 'VoxbFormatError';
  }
}

function checkAvailable(buf: Buffer, offset: number, count: number, what: string): void {
  if (offset + count > buf.length) {
    throw new VoxbFormatError(
      `truncated VOXB data: ${what} needs ${count} bytes, have ${buf.length - offset}`,
      offset,
    );
  }
}

/** Parse a VOXB buffer into a grid view; the payload is copied, not aliased. */
export function parseMap(buf: Buffer): GridView {
  checkAvailable(buf, 0, 4, 'magic');
  if (buf.toString('latin1', 0, 4) !== MAGIC) {
    throw new VoxbFormatError(`not a VOXB buffer: bad magic ${buf.subarray(0, 4).toString('latin1')}`, 0);
  }
  checkAvailable(buf, 4, 4, 'version');
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) {
    throw new VoxbFormatError(`unsupported VOXB version ${version}`, 4);
  }
  checkAvailable(buf, 8, 16, 'dims');
  const channels = buf.readUInt32LE(8);
  const nx = buf.readUInt32LE(12);
  const ny = buf.readUInt32LE(16);
  const nz = buf.readUInt32LE(20);
  checkAvailable(buf, 24, 32, 'geometry');
  const spacing = buf.readDoubleLE(24);
  const origin: [number, number, number] = [
    buf.readDoubleLE(32),
    buf.readDoubleLE(40),
    buf.readDoubleLE(48),
  ];
  checkAvailable(buf, 56, 4, 'tag length');
  const tagLen = buf.readUInt32LE(56);
  checkAvailable(buf, HEADER_FIXED, tagLen, 'source tag');
  const sourceTag = buf.toString('utf8', HEADER_FIXED, HEADER_FIXED + tagLen);

  const payloadOffset = HEADER_FIXED + tagLen;
  const count = channels * nx * ny * nz;
  const expected = count * 4;
  const actual = buf.length - payloadOffset;
  if (actual < expected) {
    throw new VoxbFormatError(
      `VOXB payload: expected ${expected} bytes (${count} f32 values), got ${actual}`,
      payloadOffset,
    );
  }
  // copy into an aligned buffer; Float32Array over a Buffer slice can be
  // misaligned relative to the underlying ArrayBuffer
  const bytes = Buffer.alloc(expected);
  buf.copy(bytes, 0, payloadOffset, payloadOffset + expected);
  const data = new Float32Array(bytes.buffer, bytes.byteOffset, count);
  return { shape: [channels, nx, ny, nz], spacing, origin, sourceTag, data };
}

/** Read a VOXB file from disk. */
export function readMap(path: string): GridView {
  return parseMap(fs.readFileSync(path));
}

/** Serialize a grid view to VOXB bytes. Validates before building anything. */
export function serializeMap(view: GridView): Buffer {
  if (!(view.data instanceof Float32Array)) {
    throw new TypeError(
      `grid data must be a Float32Array, got ${Object.prototype.toString.call(view.data)}`,
    );
  }
  const [channels, nx, ny, nz] = view.shape;
  const count = channels * nx * ny * nz;
  if (view.data.length !== count) {
    throw new RangeError(
      `grid data has ${view.data.length} values but shape ${view.shape} needs ${count}`,
    );
  }
  if (!(view.spacing > 0)) {
    throw new RangeError(`grid spacing must be positive, got ${view.spacing}`);
  }
  const tag = Buffer.from(view.sourceTag ?? '', 'utf8');
  const header = Buffer.alloc(HEADER_FIXED + tag.length);
  header.write(MAGIC, 0, 'latin1');
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(channels, 8);
  header.writeUInt32LE(nx, 12);
  header.writeUInt32LE(ny, 16);
  header.writeUInt32LE(nz, 20);
  header.writeDoubleLE(view.spacing, 24);
  header.writeDoubleLE(view.origin[0], 32);
  header.writeDoubleLE(view.origin[1], 40);
  header.writeDoubleLE(view.origin[2], 48);
  header.writeUInt32LE(tag.length, 56);
  tag.copy(header, HEADER_FIXED);
  const payload = Buffer.from(view.data.buffer, view.data.byteOffset, count * 4);
  return Buffer.concat([header, payload]);
}

/** Write a grid view to disk as VOXB. */
export function writeMap(view: GridView, path: string): void {
  fs.writeFileSync(path, serializeMap(view));
}

/**
 * Slice a multi-channel grid into consecutive channel blocks (e.g. the
 * ligand and pocket grids of a complex sample). Blocks are contiguous
 * ranges of the raster, so the values are carried over bit-for-bit.
 */
export function splitChannels(view: GridView, blockChannels: number[]): GridView[] {
  const [channels, nx, ny, nz] = view.shape;
  const total = blockChannels.reduce((a, b) => a + b, 0);
  if (total !== channels) {
    throw new RangeError(`channel blocks ${blockChannels} do not sum to ${channels}`);
  }
  const per = nx * ny * nz;
  const out: GridView[] = [];
  let start = 0;
  for (const c of blockChannels) {
    out.push({
      shape: [c, nx, ny, nz],
      spacing: view.spacing,
      origin: view.origin,
      sourceTag: view.sourceTag,
      data: view.data.slice(start * per, (start + c) * per),
    });
    start += c;
  }
  return out;
}
