/** Mono IEEE-float32 WAV encode/decode, the format the CLI exchanges at
 * bit depth "32f". */

import { PipelineError } from "./errors.js";

const FORMAT_IEEE_FLOAT = 3;

export interface WavData {
  samples: Float32Array;
  sampleRateHz: number;
}

/** Encode mono float32 samples as RIFF/WAVE (fmt + fact + data). */
export function encodeWavFloat32(
  samples: Float32Array,
  sampleRateHz: number
): Buffer {
  const dataSize = samples.length * 4;
  // riff body: WAVE + (fmt 8+16) + (fact 8+4) + (data 8+payload)
  const riffSize = 4 + 24 + 12 + 8 + dataSize;
  const buf = Buffer.alloc(8 + riffSize);
  let off = 0;
  off += buf.write("RIFF", off, "ascii");
  off = buf.writeUInt32LE(riffSize, off);
  off += buf.write("WAVE", off, "ascii");

  off += buf.write("fmt ", off, "ascii");
  off = buf.writeUInt32LE(16, off);
  off = buf.writeUInt16LE(FORMAT_IEEE_FLOAT, off);
  off = buf.writeUInt16LE(1, off); // mono
  off = buf.writeUInt32LE(sampleRateHz, off);
  off = buf.writeUInt32LE(sampleRateHz * 4, off);
  off = buf.writeUInt16LE(4, off); // block align
  off = buf.writeUInt16LE(32, off);

  off += buf.write("fact", off, "ascii");
  off = buf.writeUInt32LE(4, off);
  off = buf.writeUInt32LE(samples.length, off);

  off += buf.write("data", off, "ascii");
  off = buf.writeUInt32LE(dataSize, off);
  for (const value of samples) {
    off = buf.writeFloatLE(value, off);
  }
  return buf;
}

/** Decode a mono float32 WAV; anything else is rejected by name. */
export function decodeWavFloat32(buf: Buffer): WavData {
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== "RIFF") {
    throw new PipelineError("MalformedWav", "not a RIFF file");
  }
  if (buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new PipelineError("MalformedWav", "RIFF file is not WAVE");
  }

  let fmt: { tag: number; channels: number; rate: number; bits: number } | undefined;
  let data: Buffer | undefined;
  let off = 12;
  while (off + 8 <= buf.length) {
    const id = buf.toString("ascii", off, off + 4);
    const size = buf.readUInt32LE(off + 4);
    const body = off + 8;
    if (body + size > buf.length) {
      throw new PipelineError("MalformedWav", `truncated ${id} chunk`);
    }
    if (id === "fmt ") {
      if (size < 16) {
        throw new PipelineError("MalformedWav", "fmt chunk too small");
      }
      fmt = {
        tag: buf.readUInt16LE(body),
        channels: buf.readUInt16LE(body + 2),
        rate: buf.readUInt32LE(body + 4),
        bits: buf.readUInt16LE(body + 14),
      };
    } else if (id === "data") {
      data = buf.subarray(body, body + size);
    }
    off = body + size + (size & 1); // chunks are padded to even offsets
  }

  if (fmt === undefined || data === undefined) {
    throw new PipelineError("MalformedWav", "missing fmt or data chunk");
  }
  if (fmt.tag !== FORMAT_IEEE_FLOAT || fmt.bits !== 32) {
    throw new PipelineError(
      "UnsupportedEncoding",
      `need IEEE float32, got format tag ${fmt.tag} at ${fmt.bits} bits`
    );
  }
  if (fmt.channels !== 1) {
    throw new PipelineError(
      "UnsupportedEncoding",
      `need mono, got ${fmt.channels} channels`
    );
  }
  if (data.length % 4 !== 0) {
    throw new PipelineError("MalformedWav", "data chunk is not whole samples");
  }

  const view = new DataView(data.buffer, data.byteOffset, data.length);
  const samples = new Float32Array(data.length / 4);
  for (let i = 0; i < samples.length; i++) {
    samples[i] = view.getFloat32(i * 4, true);
  }
  return { samples, sampleRateHz: fmt.rate };
}
