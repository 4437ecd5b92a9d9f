/** Pipeline options and their TOML form for the CLI's --config flag. */

import { stringify } from "smol-toml";

/** Rates the CLI accepts for clean input. */
export const SUPPORTED_RATES = [8000, 16000, 22050, 24000, 44100, 48000] as const;

export interface DegradationOptions {
  perOpProbability?: number;
  rt60RangeS?: [number, number];
  roomDimRangeM?: [number, number];
  snrRangeDb?: [number, number];
  bandlimitRatesHz?: number[];
  clipLoQuantileRange?: [number, number];
  clipHiQuantileRange?: [number, number];
  mp3BitrateRangeKbps?: [number, number];
  packetLossTotalFraction?: number;
  packetSegmentRangeMs?: [number, number];
}

export interface CodecOptions {
  kind?: "identity" | "external";
  encodeCmd?: string;
  decodeCmd?: string;
  supportedRatesHz?: number[];
  maxConcurrent?: number;
}

export interface BoundPipelineOptions {
  /** Noise-pool JSONL; required unless perOpProbability is 0. */
  noiseIndex?: string;
  globalSeed?: number;
  degradation?: DegradationOptions;
  codec?: CodecOptions;
  /** How to invoke the CLI, e.g. ["python3", "-m", "sidonforge"]. */
  command?: string[];
}

const DEGRADATION_KEYS: Record<keyof DegradationOptions, string> = {
  perOpProbability: "per_op_probability",
  rt60RangeS: "rt60_range_s",
  roomDimRangeM: "room_dim_range_m",
  snrRangeDb: "snr_range_db",
  bandlimitRatesHz: "bandlimit_rates_hz",
  clipLoQuantileRange: "clip_lo_quantile_range",
  clipHiQuantileRange: "clip_hi_quantile_range",
  mp3BitrateRangeKbps: "mp3_bitrate_range_kbps",
  packetLossTotalFraction: "packet_loss_total_fraction",
  packetSegmentRangeMs: "packet_segment_range_ms",
};

const CODEC_KEYS: Record<keyof CodecOptions, string> = {
  kind: "kind",
  encodeCmd: "encode_cmd",
  decodeCmd: "decode_cmd",
  supportedRatesHz: "supported_rates_hz",
  maxConcurrent: "max_concurrent",
};

function renameKeys<T extends object>(
  source: T,
  names: Record<keyof T & string, string>
): Record<string, unknown> {
  const out: Record<string, unknown> = {};
  for (const key of Object.keys(names) as (keyof T & string)[]) {
    const value = source[key];
    if (value !== undefined) {
      out[names[key]] = value;
    }
  }
  return out;
}

/**
 * Render the instance config. Output is pinned to 32f so samples survive
 * the file round trip bit-exactly; per-call flags override the roots and
 * variant count.
 */
export function renderConfigToml(
  options: BoundPipelineOptions,
  cleanRoot: string,
  outRoot: string
): string {
  const table: Record<string, unknown> = {
    clean_root: cleanRoot,
    out_root: outRoot,
    global_seed: options.globalSeed ?? 0,
    variants_per_utterance: 1,
    workers: 1,
    output_bit_depth: "32f",
  };
  if (options.noiseIndex !== undefined) {
    table.noise_index = options.noiseIndex;
  }
  if (options.degradation !== undefined) {
    table.degradation = renameKeys(options.degradation, DEGRADATION_KEYS);
  }
  if (options.codec !== undefined) {
    table.codec = renameKeys(options.codec, CODEC_KEYS);
  }
  return stringify(table) + "\n";
}
