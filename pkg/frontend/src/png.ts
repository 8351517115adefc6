/**
 * 8-bit PNG codec used to exchange images with the engine.
 *
 * The engine reads and writes 8-bit grayscale ("L") or RGB PNGs; this wraps
 * pngjs so bound images cross the process boundary without any pixel change.
 */

import { PNG } from "pngjs";

export interface RawImage {
  height: number;
  width: number;
  channels: 1 | 3;
  /** Row-major H*W*C samples, one byte each. */
  samples: Uint8Array;
}

// PNG color types: 0 gray, 2 rgb, 3 palette, 4 gray+alpha, 6 rgba. The IHDR
// color type byte sits at a fixed offset: 8-byte signature, 4-byte length,
// 4-byte "IHDR", 4+4 dimensions, 1 bit depth.
const COLOR_TYPE_OFFSET = 25;
const GRAY_COLOR_TYPES = new Set([0, 4]);

/** Encode one- or three-channel 8-bit samples as a PNG. */
export function encodePng(image: RawImage): Buffer {
  const { height, width, channels, samples } = image;
  if (channels !== 1 && channels !== 3) {
    throw new Error(`expected 1 or 3 channels, got ${channels}`);
  }
  if (samples.length !== height * width * channels) {
    throw new Error(
      `sample buffer length ${samples.length} does not match ` +
        `${height}x${width}x${channels}`,
    );
  }
  const png = new PNG({ width, height });
  const data = png.data;
  for (let p = 0; p < height * width; p++) {
    if (channels === 1) {
      const v = samples[p]!;
      data[p * 4] = v;
      data[p * 4 + 1] = v;
      data[p * 4 + 2] = v;
    } else {
      data[p * 4] = samples[p * 3]!;
      data[p * 4 + 1] = samples[p * 3 + 1]!;
      data[p * 4 + 2] = samples[p * 3 + 2]!;
    }
    data[p * 4 + 3] = 255;
  }
  return PNG.sync.write(png, { colorType: channels === 1 ? 0 : 2 });
}

/** Decode a PNG to 8-bit samples, keeping the file's gray/RGB channel count. */
export function decodePng(blob: Buffer): RawImage {
  if (blob.length <= COLOR_TYPE_OFFSET) {
    throw new Error(`not a PNG: only ${blob.length} bytes`);
  }
  const colorType = blob[COLOR_TYPE_OFFSET]!;
  const channels: 1 | 3 = GRAY_COLOR_TYPES.has(colorType) ? 1 : 3;
  const png = PNG.sync.read(blob);
  const { width, height, data } = png;
  const samples = new Uint8Array(height * width * channels);
  for (let p = 0; p < height * width; p++) {
    if (channels === 1) {
      samples[p] = data[p * 4]!;
    } else {
      samples[p * 3] = data[p * 4]!;
      samples[p * 3 + 1] = data[p * 4 + 1]!;
      samples[p * 3 + 2] = data[p * 4 + 2]!;
    }
  }
  return { height, width, channels, samples };
}
