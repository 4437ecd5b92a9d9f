import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";

import { encodeWavFloat32 } from "../src/index.js";

/** Small deterministic PRNG so fixtures are stable across runs. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** A few partials over jitter; loud enough that no op sees silence. */
export function toneWithNoise(
  n: number,
  rateHz: number,
  seed: number
): Float32Array {
  const rnd = mulberry32(seed);
  const f0 = 120 + 300 * rnd();
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    const t = i / rateHz;
    out[i] =
      0.3 * Math.sin(2 * Math.PI * f0 * t) +
      0.12 * Math.sin(2 * Math.PI * 2.7 * f0 * t) +
      0.08 * (rnd() - 0.5);
  }
  return out;
}

export function uniformNoise(n: number, seed: number, amp = 0.4): Float32Array {
  const rnd = mulberry32(seed);
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = amp * (rnd() - 0.5);
  }
  return out;
}

/** First index where the arrays differ bitwise, or -1. */
export function indexOfMismatch(a: Float32Array, b: Float32Array): number {
  if (a.length !== b.length) {
    return Math.min(a.length, b.length);
  }
  for (let i = 0; i < a.length; i++) {
    if (!Object.is(a[i], b[i])) {
      return i;
    }
  }
  return -1;
}

export interface CliResult {
  status: number;
  stdout: string;
  stderr: string;
}

export function runCli(args: string[]): CliResult {
  const res = spawnSync("sidonforge", args, {
    encoding: "utf8",
    maxBuffer: 1 << 28,
  });
  if (res.error) {
    throw res.error;
  }
  return { status: res.status ?? -1, stdout: res.stdout, stderr: res.stderr };
}

/** Write a small noise corpus and index it through the CLI. */
export function buildNoiseIndex(scratch: string): string {
  const noiseDir = path.join(scratch, "noise");
  fs.mkdirSync(noiseDir, { recursive: true });
  fs.writeFileSync(
    path.join(noiseDir, "babble.wav"),
    encodeWavFloat32(uniformNoise(32000, 1), 16000)
  );
  fs.writeFileSync(
    path.join(noiseDir, "fan.wav"),
    encodeWavFloat32(uniformNoise(24000, 2), 16000)
  );
  fs.writeFileSync(
    path.join(noiseDir, "street.wav"),
    encodeWavFloat32(uniformNoise(48000, 3), 48000)
  );
  fs.writeFileSync(
    path.join(noiseDir, "hum.wav"),
    encodeWavFloat32(toneWithNoise(12000, 16000, 4), 16000)
  );
  const index = path.join(scratch, "noise_index.jsonl");
  const res = runCli(["index-noise", "--root", noiseDir, "--out", index]);
  if (res.status !== 0) {
    throw new Error(`index-noise failed (${res.status}): ${res.stderr}`);
  }
  return index;
}

/** Run fn and hand back what it threw. */
export function captureError(fn: () => unknown): unknown {
  try {
    fn();
  } catch (err) {
    return err;
  }
  throw new Error("expected a throw, got a return");
}
