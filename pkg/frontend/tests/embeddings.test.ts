import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import {
  decodeEmbeddings,
  encodeEmbeddings,
  readEmbeddings,
  writeEmbeddings,
} from "../src/embeddings";

const GOLDEN_DIR = join(__dirname, "..", "..", "tests", "data");

const tmp = mkdtempSync(join(tmpdir(), "emb1-test-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

/** Deterministic float32 test matrix, including awkward magnitudes. */
function sampleVectors(n: number, d: number): Float32Array {
  const out = new Float32Array(n * d);
  for (let i = 0; i < n * d; i++) {
    out[i] = Math.fround(Math.sin(i * 12.9898) * 43758.5453);
  }
  return out;
}

describe("EMB1 round trips", () => {
  it("writes and reads back ids and bit patterns exactly", () => {
    const ids = Array.from({ length: 7 }, (_, i) => `img_${i.toString().padStart(3, "0")}`);
    const vectors = sampleVectors(7, 5);
    const path = join(tmp, "roundtrip.emb");
    writeEmbeddings(path, ids, vectors, 5);
    const back = readEmbeddings(path);
    expect(back.n).toBe(7);
    expect(back.d).toBe(5);
    expect(back.ids).toEqual(ids);
    expect(Buffer.from(back.vectors.buffer)).toEqual(Buffer.from(vectors.buffer));
  });

  it("preserves non-finite values, negative zero, and NaN payload bits", () => {
    const vectors = new Float32Array([1.0, -0.0, Infinity, -Infinity, NaN, 1e-42]);
    // poke a non-canonical quiet NaN and a signaling NaN directly into the bits
    const u32 = new Uint32Array(vectors.buffer);
    u32[4] = 0x7fc00001;
    u32[5] = 0x7f800001;
    const blob = encodeEmbeddings(["a", "b", "c"], vectors, 2);
    const back = decodeEmbeddings(blob);
    expect(Buffer.from(back.vectors.buffer)).toEqual(Buffer.from(vectors.buffer));
    expect(encodeEmbeddings(back.ids, back.vectors, back.d)).toEqual(blob);
  });

  it("round-trips unicode image ids", () => {
    const ids = ["plain", "unicode_тигр_08", "emoji_\u{1F42F}"];
    const path = join(tmp, "unicode.emb");
    writeEmbeddings(path, ids, sampleVectors(3, 2), 2);
    expect(readEmbeddings(path).ids).toEqual(ids);
  });

  it("re-encodes engine-written golden files byte for byte", () => {
    for (const name of ["golden_query.emb", "golden_db.emb"]) {
      const original = readFileSync(join(GOLDEN_DIR, name));
      const parsed = decodeEmbeddings(original, name);
      expect(parsed.n).toBeGreaterThan(0);
      expect(parsed.d).toBe(6);
      expect(encodeEmbeddings(parsed.ids, parsed.vectors, parsed.d)).toEqual(original);
    }
  });
});

describe("EMB1 validation", () => {
  // 25-byte reference blob: header 12, one 2-float row 8, id length 4, "a" 1
  const blob = encodeEmbeddings(["a"], new Float32Array([1.5, 2.5]), 2);

  it("lays out the reference blob exactly as documented", () => {
    expect(blob.length).toBe(25);
    expect(blob.toString("ascii", 0, 4)).toBe("EMB1");
    expect(blob.readUInt32LE(4)).toBe(1);
    expect(blob.readUInt32LE(8)).toBe(2);
    expect(blob.readFloatLE(12)).toBe(1.5);
    expect(blob.readFloatLE(16)).toBe(2.5);
    expect(blob.readUInt32LE(20)).toBe(1);
    expect(blob.toString("utf-8", 24, 25)).toBe("a");
  });

  it("rejects bad magic at byte 0", () => {
    const bad = Buffer.from(blob);
    bad.write("XXXX", 0, "ascii");
    expect(() => decodeEmbeddings(bad)).toThrow(/bad magic at byte 0/);
  });

  it("reports truncation with the failing byte offset", () => {
    expect(() => decodeEmbeddings(blob.subarray(0, 8))).toThrow(/truncated header at byte 8/);
    expect(() => decodeEmbeddings(blob.subarray(0, 19))).toThrow(
      /truncated vector block at byte 19 \(need 20\)/,
    );
    expect(() => decodeEmbeddings(blob.subarray(0, 21))).toThrow(
      /truncated id length at byte 20/,
    );
    expect(() => decodeEmbeddings(blob.subarray(0, 24))).toThrow(/truncated id 0 at byte 24/);
  });

  it("rejects trailing garbage", () => {
    const padded = Buffer.concat([blob, Buffer.from([0, 0, 0])]);
    expect(() => decodeEmbeddings(padded)).toThrow(/3 trailing bytes at byte 25/);
  });

  it("rejects inconsistent writes", () => {
    expect(() => encodeEmbeddings(["a", "b"], new Float32Array(2), 2)).toThrow(
      /2 ids for 1 vector rows/,
    );
    expect(() => encodeEmbeddings(["a", "a"], new Float32Array(4), 2)).toThrow(/duplicate/);
    expect(() => encodeEmbeddings(["a"], new Float32Array(3), 2)).toThrow(/not a multiple/);
    expect(() => encodeEmbeddings(["a"], new Float32Array(0), 0)).toThrow(/dimension/);
  });
});
