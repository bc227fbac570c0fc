import assert = require('node:assert');
import { test } from 'node:test';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';

import { GridView, VoxbFormatError, parseMap, readMap, serializeMap, splitChannels, writeMap } from '../src/voxb';

function tmpFile(name: string): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'voxb-test-'));
  return path.join(dir, name);
}

function sampleView(): GridView {
  const data = new Float32Array(2 * 2 * 3 * 2);
  for (let i = 0; i < data.length; i++) data[i] = Math.sin(i) * 10;
  data[0] = -0;
  data[1] = 1.1754944e-38; // smallest normal f32
  data[2] = 1e-45;         // denormal
  return {
    shape: [2, 2, 3, 2],
    spacing: 0.25,
    origin: [0.5, -1.0, 2.0],
    sourceTag: 'synthetic',
    data,
  };
}

test('round trip preserves every byte of the payload', () => {
  const view = sampleView();
  const file = tmpFile('m.voxb');
  writeMap(view, file);
  const back = readMap(file);
  assert.deepStrictEqual(back.shape, view.shape);
  assert.strictEqual(back.spacing, view.spacing);
  assert.deepStrictEqual(back.origin, view.origin);
  assert.strictEqual(back.sourceTag, view.sourceTag);
  assert.ok(Buffer.from(back.data.buffer, back.data.byteOffset, back.data.byteLength)
    .equals(Buffer.from(view.data.buffer, view.data.byteOffset, view.data.byteLength)));
  // negative zero survives (would be lost by a numeric round trip)
  assert.ok(Object.is(back.data[0], -0));
});

test('wrong dtype is rejected before anything is written', () => {
  const view = sampleView() as any;
  view.data = new Float64Array(24);
  const file = tmpFile('never.voxb');
  assert.throws(() => writeMap(view, file), TypeError);
  assert.ok(!fs.existsSync(file));
});

test('bad magic reports offset 0', () => {
  const buf = Buffer.concat([Buffer.from('XXXX'), Buffer.alloc(64)]);
  assert.throws(
    () => parseMap(buf),
    (err: VoxbFormatError) => err instanceof VoxbFormatError && err.offset === 0,
  );
});

test('truncated payload names expected and actual byte counts', () => {
  const whole = serializeMap(sampleView());
  const cut = whole.subarray(0, whole.length - 5);
  assert.throws(() => parseMap(cut), /expected 96 bytes.*got 91/);
});

test('unsupported version is rejected', () => {
  const buf = serializeMap(sampleView());
  buf.writeUInt32LE(9, 4);
  assert.throws(() => parseMap(buf), /version 9/);
});

test('mismatched data length is rejected', () => {
  const view = sampleView();
  view.data = view.data.slice(0, 5);
  assert.throws(() => serializeMap(view), RangeError);
});

test('splitChannels carves contiguous bit-identical blocks', () => {
  const view = sampleView(); // 2 channels
  const [a, b] = splitChannels(view, [1, 1]);
  assert.deepStrictEqual(a.shape, [1, 2, 3, 2]);
  assert.deepStrictEqual(b.shape, [1, 2, 3, 2]);
  const per = 2 * 3 * 2;
  for (let i = 0; i < per; i++) {
    assert.ok(Object.is(a.data[i], view.data[i]));
    assert.ok(Object.is(b.data[i], view.data[per + i]));
  }
  assert.throws(() => splitChannels(view, [1, 2]), RangeError);
});

test('returned arrays stay valid after more reads', () => {
  const file = tmpFile('a.voxb');
  writeMap(sampleView(), file);
  const first = readMap(file);
  const snapshot = first.data.slice();
  readMap(file);
  readMap(file);
  assert.deepStrictEqual(first.data, snapshot);
});
