/**
 * Sample iteration through the core voxelizer.
 *
 * The core is consumed strictly through its external interfaces: the CLI
 * (`voxelize` subcommand) produces VOXB files plus an index, and this
 * module parses those back into typed arrays. Values are therefore
 * bit-identical to what the core computed; nothing is recomputed here.
 */

import { execFileSync } from 'child_process';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';

import { GridView, readMap, splitChannels } from './voxb';

export type Representation = 'atomtype' | 'shape' | 'density' | 'gradmag';
export type Task = 'complex' | 'molecule';

export interface VoxelizeOptions {
  /** Interpreter used to run the core (default "python3"). */
  python?: string;
  /** Grid dims override, e.g. [16, 16, 16]. */
  dims?: [number, number, number];
  /** Voxel edge override in Angstrom. */
  spacing?: number;
  /** Keep the work directory instead of deleting it (for debugging). */
  keepOutput?: boolean;
}

export interface VoxelizedSample {
  id: string;
  /** One grid for molecules; [ligand, pocket] for complexes. */
  grids: GridView[];
  labels: Record<string, number>;
  /** The VOXB file the core wrote for this sample. */
  file: string;
}

interface IndexEntry {
  file: string;
  channels: number[];
  labels: Record<string, number>;
}

interface VoxelizeIndex {
  task: Task;
  repr: Representation;
  dims: number[];
  spacing: number;
  samples: Record<string, IndexEntry>;
}

function runCore(args: string[], python: string): void {
  try {
    execFileSync(python, ['-m', 'voxgrid.cli', ...args], { stdio: ['ignore', 'pipe', 'pipe'] });
  } catch (err: any) {
    const stderr = err?.stderr?.toString?.() ?? '';
    throw new Error(`voxgrid core failed: ${stderr.trim() || err.message}`);
  }
}

function manifestOrder(manifestPath: string): string[] {
  const doc = JSON.parse(fs.readFileSync(manifestPath, 'utf8'));
  if (!Array.isArray(doc.samples)) {
    throw new Error(`manifest ${manifestPath} has no 'samples' list`);
  }
  return doc.samples.map((s: any) => s.id as string);
}

/**
 * Voxelize every sample of a manifest and return the grids in manifest
 * order. Complex samples come back as [ligand, pocket] grid views split
 * at the channel boundary the core recorded.
 */
export function voxelize(
  manifestPath: string,
  repr: Representation,
  task: Task,
  options: VoxelizeOptions = {},
): VoxelizedSample[] {
  const python = options.python ?? 'python3';
  const workDir = fs.mkdtempSync(path.join(os.tmpdir(), 'voxgrid-bindings-'));
  try {
    const args = [
      'voxelize',
      '--manifest', manifestPath,
      '--repr', repr,
      '--task', task,
      '--out', workDir,
    ];
    if (options.dims) args.push('--dims', options.dims.join(','));
    if (options.spacing !== undefined) args.push('--spacing', String(options.spacing));
    runCore(args, python);

    const index: VoxelizeIndex = JSON.parse(
      fs.readFileSync(path.join(workDir, 'grids', 'index.json'), 'utf8'),
    );
    const samples: VoxelizedSample[] = [];
    for (const id of manifestOrder(manifestPath)) {
      const entry = index.samples[id];
      if (!entry) {
        throw new Error(`core index is missing sample ${id}`);
      }
      const file = path.join(workDir, 'grids', entry.file);
      const combined = readMap(file);
      const grids = entry.channels.length > 1
        ? splitChannels(combined, entry.channels)
        : [combined];
      samples.push({ id, grids, labels: entry.labels, file });
    }
    return samples;
  } finally {
    if (!options.keepOutput) {
      fs.rmSync(workDir, { recursive: true, force: true });
    }
  }
}
