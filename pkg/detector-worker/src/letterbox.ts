/** Aspect-preserving resize to a square model input with neutral-gray
 * padding, plus the coordinate mapping back to the source frame. */

import { RgbaImage } from "./jpeg";

export const DEFAULT_INPUT_SIZE = 352;
export const PAD_GRAY = 114;

export interface LetterboxMeta {
  scale: number;
  padLeft: number;
  padTop: number;
  sourceWidth: number;
  sourceHeight: number;
}

export interface LetterboxedImage {
  image: RgbaImage;
  meta: LetterboxMeta;
}

/** Map letterboxed coordinates back onto the original image. */
export function toSource(meta: LetterboxMeta, x: number, y: number): [number, number] {
  return [(x - meta.padLeft) / meta.scale, (y - meta.padTop) / meta.scale];
}

export function toTarget(meta: LetterboxMeta, x: number, y: number): [number, number] {
  return [x * meta.scale + meta.padLeft, y * meta.scale + meta.padTop];
}

/** Round half to even, matching the resize-dimension convention used by
 * the gateway's preprocessing. */
function roundHalfEven(value: number): number {
  const floor = Math.floor(value);
  const diff = value - floor;
  if (diff > 0.5) return floor + 1;
  if (diff < 0.5) return floor;
  return floor % 2 === 0 ? floor : floor + 1;
}

/** Bilinear sample with the pixel-center convention. */
function resizeBilinear(src: RgbaImage, newWidth: number, newHeight: number): RgbaImage {
  const out = new Uint8Array(newWidth * newHeight * 4);
  const xRatio = src.width / newWidth;
  const yRatio = src.height / newHeight;
  for (let y = 0; y < newHeight; y++) {
    const sy = Math.min(Math.max((y + 0.5) * yRatio - 0.5, 0), src.height - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, src.height - 1);
    const fy = sy - y0;
    for (let x = 0; x < newWidth; x++) {
      const sx = Math.min(Math.max((x + 0.5) * xRatio - 0.5, 0), src.width - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, src.width - 1);
      const fx = sx - x0;
      const o = (y * newWidth + x) * 4;
      for (let c = 0; c < 4; c++) {
        const p00 = src.data[(y0 * src.width + x0) * 4 + c];
        const p01 = src.data[(y0 * src.width + x1) * 4 + c];
        const p10 = src.data[(y1 * src.width + x0) * 4 + c];
        const p11 = src.data[(y1 * src.width + x1) * 4 + c];
        const top = p00 + (p01 - p00) * fx;
        const bottom = p10 + (p11 - p10) * fx;
        out[o + c] = Math.round(top + (bottom - top) * fy);
      }
    }
  }
  return { width: newWidth, height: newHeight, data: out };
}

/** Resize the longest side to `target` and pad symmetrically with neutral
 * gray to a square. */
export function letterbox(image: RgbaImage, target = DEFAULT_INPUT_SIZE): LetterboxedImage {
  if (image.width <= 0 || image.height <= 0) {
    throw new Error("image must be non-empty");
  }
  const scale = target / Math.max(image.width, image.height);
  const newWidth = Math.max(1, roundHalfEven(image.width * scale));
  const newHeight = Math.max(1, roundHalfEven(image.height * scale));
  const resized =
    newWidth === image.width && newHeight === image.height
      ? image
      : resizeBilinear(image, newWidth, newHeight);
  const padLeft = Math.floor((target - newWidth) / 2);
  const padTop = Math.floor((target - newHeight) / 2);
  const data = new Uint8Array(target * target * 4);
  for (let i = 0; i < target * target; i++) {
    data[i * 4] = PAD_GRAY;
    data[i * 4 + 1] = PAD_GRAY;
    data[i * 4 + 2] = PAD_GRAY;
    data[i * 4 + 3] = 255;
  }
  for (let y = 0; y < newHeight; y++) {
    const srcRow = y * newWidth * 4;
    const dstRow = ((y + padTop) * target + padLeft) * 4;
    data.set(resized.data.subarray(srcRow, srcRow + newWidth * 4), dstRow);
  }
  return {
    image: { width: target, height: target, data },
    meta: {
      scale,
      padLeft,
      padTop,
      sourceWidth: image.width,
      sourceHeight: image.height,
    },
  };
}
