/**
 * voxgrid-bindings: typed-array access to voxgrid's volumetric outputs.
 *
 * Two entry points: `readMap`/`writeMap` for bit-exact VOXB grid I/O, and
 * `voxelize` to run the core voxelizer over a manifest and get
 * Float32Array grid views back in manifest order.
 */

export {
  GridView,
  VoxbFormatError,
  parseMap,
  readMap,
  serializeMap,
  splitChannels,
  writeMap,
} from './voxb';
export {
  Representation,
  Task,
  VoxelizeOptions,
  VoxelizedSample,
  voxelize,
} from './voxelize';

/** Mirrors the core library version this package is built against. */
export const VERSION = '0.1.0';
