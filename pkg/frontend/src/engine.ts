/**
 * Engine process plumbing.
 *
 * The bindings never reimplement pipeline logic: every result comes from the
 * `degrade-reid` command-line engine, exchanged through its documented file
 * formats, so outputs are bit-identical to direct CLI use by construction.
 */

import { execFile, execFileSync } from "node:child_process";

/** Bindings version; kept in lockstep with the engine package. */
export const VERSION = "0.1.0";

export interface EngineOptions {
  /** Engine executable; defaults to $DEGRADE_REID_CLI, then "degrade-reid" on PATH. */
  cli?: string;
}

/** Resolve the engine executable path for this call. */
export function resolveCli(opts?: EngineOptions): string {
  return opts?.cli ?? process.env.DEGRADE_REID_CLI ?? "degrade-reid";
}

/**
 * Run one engine command and return its stdout as UTF-8 text.
 *
 * The engine logs progress to stderr; that output is only surfaced when the
 * process fails (nonzero exit, or the executable is missing).
 */
export function runEngine(args: string[], opts?: EngineOptions): string {
  const cli = resolveCli(opts);
  try {
    return execFileSync(cli, args, {
      encoding: "utf-8",
      stdio: ["ignore", "pipe", "pipe"],
      maxBuffer: 64 * 1024 * 1024,
    });
  } catch (err) {
    const e = err as NodeJS.ErrnoException & { status?: number; stderr?: string };
    if (e.code === "ENOENT") {
      throw new Error(
        `engine executable ${cli!} not found; install the degrade-reid package ` +
          "or point DEGRADE_REID_CLI at it",
      );
    }
    const detail = (e.stderr ?? "").toString().trim() || e.message;
    throw new Error(`${cli} ${args[0] ?? ""} failed (exit ${e.status ?? "?"}): ${detail}`);
  }
}

function engineError(
  cli: string,
  args: string[],
  err: NodeJS.ErrnoException & { code?: unknown; stderr?: string | Buffer },
): Error {
  if (err.code === "ENOENT") {
    return new Error(
      `engine executable ${cli} not found; install the degrade-reid package ` +
        "or point DEGRADE_REID_CLI at it",
    );
  }
  const status = typeof err.code === "number" ? err.code : "?";
  const detail = (err.stderr ?? "").toString().trim() || err.message;
  return new Error(`${cli} ${args[0] ?? ""} failed (exit ${status}): ${detail}`);
}

/** runEngine without blocking the event loop; rejects with the same errors. */
export function runEngineAsync(args: string[], opts?: EngineOptions): Promise<string> {
  const cli = resolveCli(opts);
  return new Promise((resolve, reject) => {
    execFile(
      cli,
      args,
      { encoding: "utf-8", maxBuffer: 64 * 1024 * 1024 },
      (err, stdout) => {
        if (err) {
          reject(engineError(cli, args, err as NodeJS.ErrnoException & { stderr?: string }));
        } else {
          resolve(stdout);
        }
      },
    );
  });
}

/**
 * The engine's version banner, including the pinned JPEG codec identity that
 * byte-level reproducibility of jpeg stages is conditioned on.
 */
export function engineVersion(opts?: EngineOptions): string {
  return runEngine(["--version"], opts).trim();
}
