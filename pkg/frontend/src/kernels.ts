/**
 * Blur kernel constructors backed by the engine's kernel-dump command.
 *
 * Each constructor pins its parameters through --spec and parses the text
 * dump (a "# family=... k=v ..." header, then rows of full-precision float
 * reprs, which JS Number() round-trips exactly). Omitted fields fall back to
 * the engine's defaults; sampleKernel draws every field from the seed.
 */

import { EngineOptions, runEngine } from "./engine";

export const KERNEL_FAMILIES = [
  "gaussian",
  "generalized_gaussian",
  "motion",
  "defocus",
] as const;
export type KernelFamily = (typeof KERNEL_FAMILIES)[number];

export interface Kernel {
  family: KernelFamily;
  /** Engine-reported spec fields, e.g. side, sigma_x, shift as [x, y]. */
  params: Record<string, number | boolean | [number, number]>;
  rows: number;
  cols: number;
  /** Row-major rows*cols nonnegative weights summing to 1. */
  weights: Float64Array;
}

export interface GaussianSpec {
  side?: number;
  sigmaX?: number;
  sigmaY?: number;
  theta?: number;
}

export interface GeneralizedGaussianSpec extends GaussianSpec {
  beta?: number;
  noiseSigma?: number;
  noiseEnabled?: boolean;
}

export interface MotionSpec {
  side?: number;
  theta?: number;
  direction?: number;
  shiftX?: number;
  shiftY?: number;
}

export interface DefocusSpec {
  radius?: number;
  gaussSigma?: number;
}

export interface KernelOptions extends EngineOptions {
  /**
   * Engine seed; only generalized gaussian kernels with noise enabled depend
   * on it once every spec field is pinned.
   */
  seed?: number;
}

const SPEC_KEYS: Record<string, string> = {
  side: "side",
  sigmaX: "sigma_x",
  sigmaY: "sigma_y",
  theta: "theta",
  beta: "beta",
  noiseSigma: "noise_sigma",
  noiseEnabled: "noise_enabled",
  direction: "direction",
  shiftX: "shift_x",
  shiftY: "shift_y",
  radius: "radius",
  gaussSigma: "gauss_sigma",
};

type AnySpec = GaussianSpec | GeneralizedGaussianSpec | MotionSpec | DefocusSpec;

function specArg(spec: AnySpec): string | null {
  const parts: string[] = [];
  for (const [key, value] of Object.entries(spec) as [string, number | boolean | undefined][]) {
    if (value === undefined) continue;
    const cliKey = SPEC_KEYS[key];
    if (!cliKey) {
      throw new Error(`unknown kernel spec field ${key!}`);
    }
    parts.push(`${cliKey}=${value}`);
  }
  return parts.length ? parts.join(",") : null;
}

function parseHeaderValue(key: string, raw: string): number | boolean | [number, number] {
  if (raw === "True" || raw === "False") {
    return raw === "True";
  }
  if (key === "shift") {
    const [x, y] = raw.split(":");
    return [Number(x), Number(y)];
  }
  const value = Number(raw);
  if (Number.isNaN(value)) {
    throw new Error(`unparseable kernel header value ${key}=${raw}`);
  }
  return value;
}

function parseKernelDump(text: string): Kernel {
  const lines = text.split("\n").filter((line) => line.trim().length > 0);
  const header = lines[0];
  if (!header || !header.startsWith("# family=")) {
    throw new Error(`kernel dump missing "# family=..." header: ${header ?? "<empty>"}`);
  }
  const params: Kernel["params"] = {};
  let family: KernelFamily | null = null;
  for (const token of header.slice(2).split(/\s+/)) {
    const eq = token.indexOf("=");
    const key = token.slice(0, eq);
    const raw = token.slice(eq + 1);
    if (key === "family") {
      if (!(KERNEL_FAMILIES as readonly string[]).includes(raw)) {
        throw new Error(`unknown kernel family ${raw} in dump header`);
      }
      family = raw as KernelFamily;
    } else {
      params[key] = parseHeaderValue(key, raw);
    }
  }
  if (!family) {
    throw new Error("kernel dump header has no family field");
  }
  const rowValues = lines.slice(1).map((line) => line.trim().split(/\s+/).map(Number));
  const rows = rowValues.length;
  const cols = rowValues[0]?.length ?? 0;
  if (rows === 0 || cols === 0) {
    throw new Error("kernel dump has no weight rows");
  }
  const weights = new Float64Array(rows * cols);
  rowValues.forEach((row, i) => {
    if (row.length !== cols) {
      throw new Error(`ragged kernel dump: row ${i} has ${row.length} values, not ${cols}`);
    }
    row.forEach((w, j) => {
      if (Number.isNaN(w)) {
        throw new Error(`unparseable kernel weight at row ${i}, col ${j}`);
      }
      weights[i * cols + j] = w;
    });
  });
  return { family, params, rows, cols, weights };
}

function dumpKernel(
  family: KernelFamily,
  spec: AnySpec | null,
  opts?: KernelOptions,
): Kernel {
  const args = ["kernel-dump", "--family", family, "--seed", String(opts?.seed ?? 0)];
  if (spec) {
    const arg = specArg(spec);
    if (arg) {
      args.push("--spec", arg);
    }
  }
  return parseKernelDump(runEngine(args, opts));
}

/** Anisotropic gaussian blur kernel. */
export function gaussianKernel(spec: GaussianSpec = {}, opts?: KernelOptions): Kernel {
  return dumpKernel("gaussian", spec, opts);
}

/** Generalized gaussian kernel; beta=1 reduces to the plain gaussian. */
export function generalizedGaussianKernel(
  spec: GeneralizedGaussianSpec = {},
  opts?: KernelOptions,
): Kernel {
  return dumpKernel("generalized_gaussian", spec, opts);
}

/** Motion line kernel; direction slides the sample interval along the line. */
export function motionKernel(spec: MotionSpec = {}, opts?: KernelOptions): Kernel {
  return dumpKernel("motion", spec, opts);
}

/** Defocus disc kernel composed with its small companion gaussian. */
export function defocusKernel(spec: DefocusSpec = {}, opts?: KernelOptions): Kernel {
  return dumpKernel("defocus", spec, opts);
}

/** Draw every spec field from the engine's sampler for the given seed. */
export function sampleKernel(family: KernelFamily, seed: number, opts?: EngineOptions): Kernel {
  return dumpKernel(family, null, { ...opts, seed });
}
