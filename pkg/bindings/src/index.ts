export { PipelineError } from "./errors.js";
export { decodeWavFloat32, encodeWavFloat32, WavData } from "./wav.js";
export {
  BoundPipelineOptions,
  CodecOptions,
  DegradationOptions,
  SUPPORTED_RATES,
} from "./config.js";
export {
  BoundPipeline,
  DegradationRecordJson,
  DegradeResult,
  ManifestEntry,
  OpRecordJson,
} from "./pipeline.js";
