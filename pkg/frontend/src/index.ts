/**
 * Node bindings for the degrade-reid engine.
 *
 * Everything is transported through the engine's stable external surface:
 * the CLI, 8-bit PNG images, JSONL traces, and EMB1 embedding files. No
 * pipeline logic lives on this side, so results match direct engine use
 * bit-for-bit.
 */

export { VERSION, engineVersion, resolveCli, runEngine, runEngineAsync } from "./engine";
export type { EngineOptions } from "./engine";

export {
  decodeEmbeddings,
  encodeEmbeddings,
  readEmbeddings,
  writeEmbeddings,
} from "./embeddings";
export type { EmbeddingSet } from "./embeddings";

export {
  KERNEL_FAMILIES,
  defocusKernel,
  gaussianKernel,
  generalizedGaussianKernel,
  motionKernel,
  sampleKernel,
} from "./kernels";
export type {
  DefocusSpec,
  GaussianSpec,
  GeneralizedGaussianSpec,
  Kernel,
  KernelFamily,
  KernelOptions,
  MotionSpec,
} from "./kernels";

export {
  PIPELINE_KINDS,
  PIPELINE_SIDE,
  applyPipeline,
  applyPipelineAsync,
  degradeBatch,
  degradeBatchAsync,
  quantizeTo8Bit,
} from "./pipeline";
export type {
  ApplyOptions,
  ApplyResult,
  BoundImage,
  PipelineKind,
  PipelineTrace,
  TraceOp,
} from "./pipeline";

export { decodePng, encodePng } from "./png";
export type { RawImage } from "./png";
