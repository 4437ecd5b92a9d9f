/** BoundPipeline: call the degradation CLI on in-memory arrays.
 *
 * Every call round-trips through a private temp corpus at bit depth 32f,
 * so the returned samples are exactly what the CLI writes for the same
 * (global seed, utterance id, variant index).
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import {
  BoundPipelineOptions,
  renderConfigToml,
  SUPPORTED_RATES,
} from "./config.js";
import { errorFromStderr, PipelineError } from "./errors.js";
import { decodeWavFloat32, encodeWavFloat32 } from "./wav.js";

export interface OpRecordJson {
  op: string;
  applied: boolean;
  params: Record<string, unknown>;
}

export interface DegradationRecordJson {
  rng_seed: number;
  variant_index: number;
  ops: OpRecordJson[];
}

export interface ManifestEntry {
  schema: string;
  utterance_id: string;
  variant_index: number;
  clean_path: string;
  noisy_path: string;
  num_samples: number;
  sample_rate_hz: number;
  duration_s: number;
  dataset_name: string | null;
  language: string | null;
  record: DegradationRecordJson;
}

export interface DegradeResult {
  degraded: Float32Array;
  record: DegradationRecordJson;
}

interface RunOutcome {
  status: number;
  stdout: string;
  stderr: string;
}

export class BoundPipeline {
  readonly globalSeed: number;
  private readonly command: string[];
  private readonly configPath: string;
  private workDir: string | undefined;
  private callCount = 0;

  constructor(options: BoundPipelineOptions = {}) {
    this.command = options.command ?? ["sidonforge"];
    this.globalSeed = options.globalSeed ?? 0;
    this.workDir = fs.mkdtempSync(path.join(os.tmpdir(), "sidonforge-bind-"));
    try {
      const cleanStub = path.join(this.workDir, "clean_stub");
      const outStub = path.join(this.workDir, "out_stub");
      fs.mkdirSync(cleanStub);
      this.configPath = path.join(this.workDir, "config.toml");
      fs.writeFileSync(
        this.configPath,
        renderConfigToml(options, cleanStub, outStub)
      );
      // fail at construction exactly where the CLI would
      const probe = this.run(["degrade", "--config", this.configPath, "--dry-run"]);
      if (probe.status !== 0) {
        throw (
          errorFromStderr(probe.stderr) ??
          new PipelineError(
            "FatalConfig",
            `config rejected with status ${probe.status}: ${probe.stderr.trim()}`
          )
        );
      }
    } catch (err) {
      this.close();
      throw err;
    }
  }

  /** Degrade one utterance; the id keys the per-variant seed derivation. */
  degradeArray(
    samples: Float32Array,
    sampleRateHz: number,
    utteranceId: string,
    variantIndex = 0
  ): DegradeResult {
    const work = this.requireOpen();
    if (!(SUPPORTED_RATES as readonly number[]).includes(sampleRateHz)) {
      throw new PipelineError(
        "UnsupportedRate",
        `rate ${sampleRateHz} not in ${SUPPORTED_RATES.join(", ")}`
      );
    }
    if (!Number.isInteger(variantIndex) || variantIndex < 0) {
      throw new RangeError(`variant index must be a non-negative integer`);
    }
    if (path.isAbsolute(utteranceId) || utteranceId.split(/[\\/]/).includes("..")) {
      throw new RangeError(`utterance id must be a relative path: ${utteranceId}`);
    }

    const callDir = path.join(work, `call-${this.callCount++}`);
    const cleanRoot = path.join(callDir, "clean");
    const outRoot = path.join(callDir, "out");
    try {
      const cleanPath = path.join(cleanRoot, utteranceId);
      fs.mkdirSync(path.dirname(cleanPath), { recursive: true });
      fs.writeFileSync(cleanPath, encodeWavFloat32(samples, sampleRateHz));

      const outcome = this.run([
        "degrade",
        "--config", this.configPath,
        "--clean-root", cleanRoot,
        "--out-root", outRoot,
        "--variants", String(variantIndex + 1),
        "--seed", String(this.globalSeed),
        "--workers", "1",
        "--bit-depth", "32f",
      ]);
      if (outcome.status === 2) {
        throw this.firstFailure(outRoot, outcome.stderr);
      }
      if (outcome.status !== 0) {
        throw (
          errorFromStderr(outcome.stderr) ??
          new PipelineError(
            "IoError",
            `degrade exited with ${outcome.status}: ${outcome.stderr.trim()}`
          )
        );
      }

      const entry = this.findEntry(outRoot, utteranceId, variantIndex);
      const wav = decodeWavFloat32(
        fs.readFileSync(path.join(outRoot, entry.noisy_path))
      );
      return { degraded: wav.samples, record: entry.record };
    } finally {
      fs.rmSync(callDir, { recursive: true, force: true });
    }
  }

  /** Remove the temp corpus; further calls throw. Safe to call twice. */
  close(): void {
    if (this.workDir !== undefined) {
      fs.rmSync(this.workDir, { recursive: true, force: true });
      this.workDir = undefined;
    }
  }

  get closed(): boolean {
    return this.workDir === undefined;
  }

  /** Temp corpus root while open, undefined after close(). */
  get tempRoot(): string | undefined {
    return this.workDir;
  }

  private requireOpen(): string {
    if (this.workDir === undefined) {
      throw new Error("BoundPipeline is closed");
    }
    return this.workDir;
  }

  private run(args: string[]): RunOutcome {
    const [cmd, ...prefix] = this.command;
    const res = spawnSync(cmd, [...prefix, ...args], {
      encoding: "utf8",
      maxBuffer: 1 << 28,
    });
    if (res.error) {
      throw new PipelineError("IoError", `cannot run ${cmd}: ${res.error.message}`);
    }
    if (res.status === null) {
      throw new PipelineError("IoError", `${cmd} killed by signal ${res.signal}`);
    }
    return { status: res.status, stdout: res.stdout, stderr: res.stderr };
  }

  private firstFailure(outRoot: string, stderr: string): PipelineError {
    const failuresPath = path.join(outRoot, "failures.jsonl");
    if (fs.existsSync(failuresPath)) {
      const line = fs
        .readFileSync(failuresPath, "utf8")
        .split("\n")
        .find((l) => l.trim() !== "");
      if (line !== undefined) {
        const failure = JSON.parse(line) as { error: string; message: string };
        return new PipelineError(failure.error, failure.message);
      }
    }
    return new PipelineError("IoError", `degrade failed: ${stderr.trim()}`);
  }

  private findEntry(
    outRoot: string,
    utteranceId: string,
    variantIndex: number
  ): ManifestEntry {
    const manifest = fs.readFileSync(path.join(outRoot, "manifest.jsonl"), "utf8");
    for (const line of manifest.split("\n")) {
      if (line.trim() === "") {
        continue;
      }
      const entry = JSON.parse(line) as ManifestEntry;
      if (entry.utterance_id === utteranceId && entry.variant_index === variantIndex) {
        return entry;
      }
    }
    throw new PipelineError(
      "IoError",
      `manifest has no entry for ${utteranceId} variant ${variantIndex}`
    );
  }
}
