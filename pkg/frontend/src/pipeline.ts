/**
 * Degradation pipeline application through the engine CLI.
 *
 * Images cross the boundary as the engine's 8-bit PNG interchange format, so
 * callers either hand over exactly 8-bit-quantized samples or opt in to the
 * quantization copy; precision is never dropped silently. Outputs and traces
 * are byte-identical to invoking `degrade-reid degrade` directly because that
 * is literally what happens underneath.
 */

import { mkdtempSync, mkdirSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { EngineOptions, runEngine, runEngineAsync } from "./engine";
import { decodePng, encodePng } from "./png";

/** Side length every pipeline expects on input. */
export const PIPELINE_SIDE = 384;

export const PIPELINE_KINDS = ["simple", "diverse", "diverse_plus"] as const;
export type PipelineKind = (typeof PIPELINE_KINDS)[number];

export interface BoundImage {
  height: number;
  width: number;
  channels: 1 | 3;
  /** Row-major H*W*C samples in [0, 1]. */
  data: Float64Array;
}

export interface TraceOp {
  name: string;
  /** Engine vocabulary, e.g. blur family and sigmas; u64 seeds are BigInt. */
  params: Record<string, unknown>;
}

export interface PipelineTrace {
  imageId: string;
  pipeline: string;
  /** Per-image sub-seed; u64, so a BigInt rather than a lossy number. */
  subSeed: bigint;
  ops: TraceOp[];
}

export interface ApplyResult {
  image: BoundImage;
  trace: PipelineTrace;
}

export interface ApplyOptions extends EngineOptions {
  /**
   * Quantize samples to the nearest 1/255 step (one explicit copy) instead of
   * requiring them to be exactly 8-bit representable.
   */
  quantize?: boolean;
}

const IMAGE_ID_PATTERN = /^[A-Za-z0-9][A-Za-z0-9._-]*$/;

/** Round half to even, matching the engine's quantizer on .5 ties. */
function roundHalfEven(x: number): number {
  const floor = Math.floor(x);
  const diff = x - floor;
  if (diff > 0.5) return floor + 1;
  if (diff < 0.5) return floor;
  return floor % 2 === 0 ? floor : floor + 1;
}

function validateImage(image: BoundImage, imageId: string): void {
  const { height, width, channels, data } = image;
  if (height !== PIPELINE_SIDE || width !== PIPELINE_SIDE) {
    throw new Error(
      `${imageId}: pipelines expect ${PIPELINE_SIDE}x${PIPELINE_SIDE} input, ` +
        `got ${height}x${width}`,
    );
  }
  if (channels !== 1 && channels !== 3) {
    throw new Error(`${imageId}: expected 1 or 3 channels, got ${channels}`);
  }
  if (data.length !== height * width * channels) {
    throw new Error(
      `${imageId}: data length ${data.length} does not match ${height}x${width}x${channels}`,
    );
  }
  for (let i = 0; i < data.length; i++) {
    const v = data[i]!;
    if (!(v >= 0 && v <= 1)) {
      throw new Error(`${imageId}: sample ${i} = ${v} outside [0, 1]`);
    }
  }
}

function toByteSamples(image: BoundImage, imageId: string, quantize: boolean): Uint8Array {
  const out = new Uint8Array(image.data.length);
  for (let i = 0; i < image.data.length; i++) {
    const scaled = image.data[i]! * 255;
    const byte = Math.min(255, Math.max(0, roundHalfEven(scaled)));
    if (!quantize && Math.abs(scaled - byte) > 1e-6) {
      throw new Error(
        `${imageId}: sample ${i} = ${image.data[i]} is not 8-bit representable; ` +
          "the engine exchanges 8-bit PNGs, so pass k/255-valued samples or " +
          "set quantize: true / use quantizeTo8Bit for an explicit copy",
      );
    }
    out[i] = byte;
  }
  return out;
}

/** Explicitly quantize a [0, 1] image onto the engine's 8-bit grid. */
export function quantizeTo8Bit(image: BoundImage): BoundImage {
  validateImage(image, "image");
  const bytes = toByteSamples(image, "image", true);
  const data = new Float64Array(bytes.length);
  for (let i = 0; i < bytes.length; i++) {
    data[i] = bytes[i]! / 255;
  }
  return { ...image, data };
}

// json.dumps writes u64 seeds as bare integers wider than 2^53; quote them
// before JSON.parse so no precision is lost, then lift them to BigInt
function parseTraceLine(line: string): PipelineTrace {
  const quoted = line.replace(/("(?:sub_)?seed": )(\d+)/g, '$1"$2"');
  const rec = JSON.parse(quoted) as {
    image_id: string;
    pipeline: string;
    sub_seed: string;
    ops: { name: string; params: Record<string, unknown> }[];
  };
  const ops: TraceOp[] = rec.ops.map((op) => {
    const params = { ...op.params };
    if (typeof params.seed === "string") {
      params.seed = BigInt(params.seed);
    }
    return { name: op.name, params };
  });
  return {
    imageId: rec.image_id,
    pipeline: rec.pipeline,
    subSeed: BigInt(rec.sub_seed),
    ops,
  };
}

function fromByteSamples(raw: {
  height: number;
  width: number;
  channels: 1 | 3;
  samples: Uint8Array;
}): BoundImage {
  const data = new Float64Array(raw.samples.length);
  for (let i = 0; i < raw.samples.length; i++) {
    data[i] = raw.samples[i]! / 255;
  }
  return { height: raw.height, width: raw.width, channels: raw.channels, data };
}

interface StagedBatch {
  root: string;
  args: string[];
  ids: string[];
  outDir: string;
  tracePath: string;
}

/** Validate a batch and stage its PNGs plus the engine argument list. */
function stageBatch(
  images: Record<string, BoundImage> | Map<string, BoundImage>,
  kind: PipelineKind | string,
  seed: number,
  opts?: ApplyOptions,
): StagedBatch {
  const entries = images instanceof Map ? [...images.entries()] : Object.entries(images);
  if (entries.length === 0) {
    throw new Error("no images to degrade");
  }
  if (!Number.isSafeInteger(seed) || seed < 0) {
    throw new Error(`seed must be a nonnegative safe integer, got ${seed}`);
  }
  for (const [imageId, image] of entries) {
    if (!IMAGE_ID_PATTERN.test(imageId)) {
      throw new Error(`image id ${JSON.stringify(imageId)} is not a safe file stem`);
    }
    validateImage(image, imageId);
  }
  const root = mkdtempSync(join(tmpdir(), "degrade-reid-"));
  const inDir = join(root, "in");
  const outDir = join(root, "out");
  const tracePath = join(root, "trace.jsonl");
  try {
    mkdirSync(inDir);
    for (const [imageId, image] of entries) {
      const samples = toByteSamples(image, imageId, opts?.quantize ?? false);
      writeFileSync(
        join(inDir, `${imageId}.png`),
        encodePng({ height: image.height, width: image.width, channels: image.channels, samples }),
      );
    }
  } catch (err) {
    rmSync(root, { recursive: true, force: true });
    throw err;
  }
  const args = [
    "degrade",
    "--pipeline", String(kind),
    "--seed", String(seed),
    "--input", inDir,
    "--output", outDir,
    "--trace", tracePath,
    "--workers", "1",
  ];
  return { root, args, ids: entries.map(([id]) => id), outDir, tracePath };
}

/** Collect engine outputs and traces for a staged batch. */
function collectBatch(staged: StagedBatch): Map<string, ApplyResult> {
  const traces = new Map<string, PipelineTrace>();
  for (const line of readFileSync(staged.tracePath, "utf-8").split("\n")) {
    if (!line.trim()) continue;
    const trace = parseTraceLine(line);
    traces.set(trace.imageId, trace);
  }
  const results = new Map<string, ApplyResult>();
  for (const imageId of staged.ids) {
    const trace = traces.get(imageId);
    if (!trace) {
      throw new Error(`engine returned no trace for ${imageId}`);
    }
    const image = fromByteSamples(decodePng(readFileSync(join(staged.outDir, `${imageId}.png`))));
    results.set(imageId, { image, trace });
  }
  return results;
}

/**
 * Degrade a batch of images with one pipeline run.
 *
 * Each image's parameters come from a sub-seed derived from (seed, image id),
 * exactly as the CLI does for a directory, so results are independent of
 * batch composition and of how many images share the call.
 */
export function degradeBatch(
  images: Record<string, BoundImage> | Map<string, BoundImage>,
  kind: PipelineKind | string,
  seed: number,
  opts?: ApplyOptions,
): Map<string, ApplyResult> {
  const staged = stageBatch(images, kind, seed, opts);
  try {
    runEngine(staged.args, opts);
    return collectBatch(staged);
  } finally {
    rmSync(staged.root, { recursive: true, force: true });
  }
}

/**
 * degradeBatch without blocking the event loop: the engine runs as a child
 * process the host can overlap with other work, so data-loading pipelines
 * keep feeding while degradation is in flight. Calls are isolated (each gets
 * a private temp directory) and therefore safe to run concurrently.
 */
export async function degradeBatchAsync(
  images: Record<string, BoundImage> | Map<string, BoundImage>,
  kind: PipelineKind | string,
  seed: number,
  opts?: ApplyOptions,
): Promise<Map<string, ApplyResult>> {
  const staged = stageBatch(images, kind, seed, opts);
  try {
    await runEngineAsync(staged.args, opts);
    return collectBatch(staged);
  } finally {
    rmSync(staged.root, { recursive: true, force: true });
  }
}

/**
 * Degrade one image; returns the degraded image and its replayable trace.
 *
 * Deterministic in (image, kind, seed, imageId) across processes and hosts
 * that share the engine's pinned JPEG codec.
 */
export function applyPipeline(
  image: BoundImage,
  kind: PipelineKind | string,
  seed: number,
  imageId = "image",
  opts?: ApplyOptions,
): ApplyResult {
  const results = degradeBatch(new Map([[imageId, image]]), kind, seed, opts);
  return results.get(imageId)!;
}

/** applyPipeline without blocking the event loop. */
export async function applyPipelineAsync(
  image: BoundImage,
  kind: PipelineKind | string,
  seed: number,
  imageId = "image",
  opts?: ApplyOptions,
): Promise<ApplyResult> {
  const results = await degradeBatchAsync(new Map([[imageId, image]]), kind, seed, opts);
  return results.get(imageId)!;
}
