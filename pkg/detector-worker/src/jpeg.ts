/** JPEG payload handling on top of jpeg-js. */

import * as jpeg from "jpeg-js";

import { GrayImage } from "./codec";

export interface RgbaImage {
  width: number;
  height: number;
  /** RGBA, row-major. */
  data: Uint8Array;
}

/** Decode a JPEG payload to RGBA, or null when the payload is not a
 * decodable image. */
export function decodeJpeg(payload: Buffer | Uint8Array): RgbaImage | null {
  if (payload.length === 0) return null;
  try {
    const image = jpeg.decode(payload, { useTArray: true, formatAsRGBA: true });
    if (image.width <= 0 || image.height <= 0) return null;
    return { width: image.width, height: image.height, data: image.data };
  } catch {
    return null;
  }
}

/** Channel-mean grayscale view of an RGBA image. */
export function toGray(image: RgbaImage): GrayImage {
  const { width, height, data } = image;
  const pixels = new Float64Array(width * height);
  for (let i = 0; i < pixels.length; i++) {
    const o = i * 4;
    pixels[i] = (data[o] + data[o + 1] + data[o + 2]) / 3;
  }
  return { width, height, pixels };
}

/** Encode a grayscale buffer as JPEG (tests and tooling). */
export function grayToJpeg(
  pixels: Uint8Array | Uint8ClampedArray,
  width: number,
  height: number,
  quality = 90,
): Buffer {
  const rgba = Buffer.alloc(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const v = pixels[i];
    rgba[i * 4] = v;
    rgba[i * 4 + 1] = v;
    rgba[i * 4 + 2] = v;
    rgba[i * 4 + 3] = 255;
  }
  return Buffer.from(jpeg.encode({ data: rgba, width, height }, quality).data);
}
