/** Pure view-model helpers for the evidence panel. Display scaling only:
 * every number shown comes straight from an API response. */

import type { ImagePayload } from "./api.js";

export const CORRECT_COLOR = "#1a7f37";
export const WRONG_COLOR = "#c62828";

export function colorForCorrect(correct: boolean | null): string {
  return correct ? CORRECT_COLOR : WRONG_COLOR;
}

/** Scale one float pixel value to an 8-bit channel. */
export function floatToByte(v: number): number {
  return Math.round(Math.min(1, Math.max(0, v)) * 255);
}

/** Decode the API's base64 raw little-endian float32 image payload. */
export function decodeImage(payload: ImagePayload): Float32Array {
  const binary = atob(payload.b64);
  const buffer = new ArrayBuffer(binary.length);
  const bytes = new Uint8Array(buffer);
  for (let i = 0; i < binary.length; i++) {
    bytes[i] = binary.charCodeAt(i);
  }
  return new Float32Array(buffer);
}

/** RGBA bytes ready for a canvas ImageData, from HxWx3 floats. */
export function imageToRgba(
  values: ArrayLike<number>,
  height: number,
  width: number,
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(new ArrayBuffer(height * width * 4));
  for (let p = 0; p < height * width; p++) {
    out[p * 4] = floatToByte(values[p * 3]);
    out[p * 4 + 1] = floatToByte(values[p * 3 + 1]);
    out[p * 4 + 2] = floatToByte(values[p * 3 + 2]);
    out[p * 4 + 3] = 255;
  }
  return out;
}

export interface BarSpec {
  classIndex: number;
  value: number;       // exactly the served probability
  heightPct: number;   // display scaling only: value * 100
  highlighted: boolean;
  color: string;
}

/** Bars for a softmax distribution; values are passed through unmodified. */
export function softmaxBars(
  rho: number[],
  predicted: number,
  correct: boolean | null,
): BarSpec[] {
  return rho.map((value, classIndex) => ({
    classIndex,
    value,
    heightPct: value * 100,
    highlighted: classIndex === predicted,
    color: classIndex === predicted ? colorForCorrect(correct) : "#9e9e9e",
  }));
}

export function formatMetric(name: string, value: number, digits = 3): string {
  return `${name}=${value.toFixed(digits)}`;
}
