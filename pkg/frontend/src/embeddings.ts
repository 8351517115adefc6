/**
 * Bit-exact reader/writer for the engine's EMB1 embedding files.
 *
 * File layout: magic "EMB1", little-endian u32 n, u32 d, then n*d
 * little-endian float32 values row-major, then n image ids each stored as a
 * little-endian u32 byte length followed by that many UTF-8 bytes.
 */

import { readFileSync, writeFileSync } from "node:fs";

const MAGIC = "EMB1";
const HEADER_BYTES = 12;

const LITTLE_ENDIAN = new Uint8Array(new Uint32Array([1]).buffer)[0] === 1;

export interface EmbeddingSet {
  ids: string[];
  /** Row-major (n, d) float32 samples; bit patterns are preserved verbatim. */
  vectors: Float32Array;
  n: number;
  d: number;
}

/** In-place 4-byte word reversal, for the big-endian host fallback. */
function byteSwap32(bytes: Uint8Array): void {
  for (let i = 0; i + 3 < bytes.length; i += 4) {
    let t = bytes[i]!;
    bytes[i] = bytes[i + 3]!;
    bytes[i + 3] = t;
    t = bytes[i + 1]!;
    bytes[i + 1] = bytes[i + 2]!;
    bytes[i + 2] = t;
  }
}

function validateSet(ids: string[], vectors: Float32Array, d: number): number {
  if (d < 1 && ids.length > 0) {
    throw new Error("embedding dimension must be >= 1");
  }
  if (d > 0 && vectors.length % d !== 0) {
    throw new Error(`vector buffer length ${vectors.length} is not a multiple of d=${d}`);
  }
  const n = d > 0 ? vectors.length / d : 0;
  if (ids.length !== n) {
    throw new Error(`${ids.length} ids for ${n} vector rows`);
  }
  if (new Set(ids).size !== ids.length) {
    throw new Error("duplicate image ids in embedding set");
  }
  return n;
}

/** Serialize one embedding set to EMB1 bytes. */
export function encodeEmbeddings(ids: string[], vectors: Float32Array, d: number): Buffer {
  const n = validateSet(ids, vectors, d);
  const idBlobs = ids.map((id) => Buffer.from(id, "utf-8"));
  let total = HEADER_BYTES + n * d * 4;
  for (const blob of idBlobs) total += 4 + blob.length;
  const out = Buffer.alloc(total);
  out.write(MAGIC, 0, "ascii");
  out.writeUInt32LE(n, 4);
  out.writeUInt32LE(d, 8);
  // move the float block as raw bytes so every bit pattern (NaN payloads
  // included) lands in the file verbatim
  const src = new Uint8Array(vectors.buffer, vectors.byteOffset, n * d * 4);
  out.set(src, HEADER_BYTES);
  if (!LITTLE_ENDIAN) {
    byteSwap32(out.subarray(HEADER_BYTES, HEADER_BYTES + n * d * 4));
  }
  let offset = HEADER_BYTES + n * d * 4;
  for (const blob of idBlobs) {
    out.writeUInt32LE(blob.length, offset);
    blob.copy(out, offset + 4);
    offset += 4 + blob.length;
  }
  return out;
}

/**
 * Parse EMB1 bytes. Malformed input raises with the byte offset at fault,
 * mirroring the engine's own reader.
 */
export function decodeEmbeddings(blob: Buffer, label = "embeddings"): EmbeddingSet {
  if (blob.length < 4 || blob.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${label}: bad magic at byte 0 (expected "${MAGIC}")`);
  }
  if (blob.length < HEADER_BYTES) {
    throw new Error(`${label}: truncated header at byte ${blob.length}`);
  }
  const n = blob.readUInt32LE(4);
  const d = blob.readUInt32LE(8);
  let offset = HEADER_BYTES;
  const need = n * d * 4;
  if (blob.length < offset + need) {
    throw new Error(
      `${label}: truncated vector block at byte ${blob.length} (need ${offset + need})`,
    );
  }
  // copy into a fresh ArrayBuffer: never alias pooled Buffer storage, keep
  // 4-alignment, and preserve bit patterns by moving bytes rather than values
  const raw = new ArrayBuffer(need);
  const bytes = new Uint8Array(raw);
  bytes.set(blob.subarray(offset, offset + need));
  if (!LITTLE_ENDIAN) {
    byteSwap32(bytes);
  }
  const vectors = new Float32Array(raw);
  offset += need;
  const ids: string[] = [];
  for (let i = 0; i < n; i++) {
    if (blob.length < offset + 4) {
      throw new Error(`${label}: truncated id length at byte ${offset}`);
    }
    const length = blob.readUInt32LE(offset);
    offset += 4;
    if (blob.length < offset + length) {
      throw new Error(`${label}: truncated id ${i} at byte ${offset}`);
    }
    ids.push(blob.toString("utf-8", offset, offset + length));
    offset += length;
  }
  if (offset !== blob.length) {
    throw new Error(`${label}: ${blob.length - offset} trailing bytes at byte ${offset}`);
  }
  validateSet(ids, vectors, d);
  return { ids, vectors, n, d };
}

/** Read an EMB1 file. */
export function readEmbeddings(path: string): EmbeddingSet {
  return decodeEmbeddings(readFileSync(path), path);
}

/** Write an EMB1 file; round-trips bit-exactly through readEmbeddings. */
export function writeEmbeddings(
  path: string,
  ids: string[],
  vectors: Float32Array,
  d: number,
): void {
  writeFileSync(path, encodeEmbeddings(ids, vectors, d));
}
