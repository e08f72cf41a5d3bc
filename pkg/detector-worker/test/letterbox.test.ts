import { describe, expect, it } from "vitest";

import { RgbaImage } from "../src/jpeg";
import { PAD_GRAY, letterbox, toSource, toTarget } from "../src/letterbox";

function solid(width: number, height: number, value: number): RgbaImage {
  const data = new Uint8Array(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    data[i * 4] = value;
    data[i * 4 + 1] = value;
    data[i * 4 + 2] = value;
    data[i * 4 + 3] = 255;
  }
  return { width, height, data };
}

function pixel(image: RgbaImage, x: number, y: number): number {
  return image.data[(y * image.width + x) * 4];
}

describe("letterbox", () => {
  it("scales a landscape frame and pads top and bottom", () => {
    const { image, meta } = letterbox(solid(704, 480, 255));
    expect(image.width).toBe(352);
    expect(image.height).toBe(352);
    expect(meta.scale).toBeCloseTo(0.5, 12);
    expect(meta.padLeft).toBe(0);
    expect(meta.padTop).toBe(56);
    expect(pixel(image, 100, 0)).toBe(PAD_GRAY);
    expect(pixel(image, 100, 351)).toBe(PAD_GRAY);
    expect(pixel(image, 100, 176)).toBe(255);
  });

  it("pads a portrait frame on the left and right", () => {
    const { image, meta } = letterbox(solid(176, 352, 200));
    expect(meta.scale).toBe(1.0);
    expect(meta.padLeft).toBe(88);
    expect(meta.padTop).toBe(0);
    expect(pixel(image, 0, 100)).toBe(PAD_GRAY);
    expect(pixel(image, 351, 100)).toBe(PAD_GRAY);
    expect(pixel(image, 176, 100)).toBe(200);
  });

  it("passes a already-square target-size frame through", () => {
    const source = solid(352, 352, 123);
    const { image, meta } = letterbox(source);
    expect(meta.scale).toBe(1.0);
    expect(meta.padLeft).toBe(0);
    expect(meta.padTop).toBe(0);
    expect(Array.from(image.data)).toEqual(Array.from(source.data));
  });

  it("supports a custom target size", () => {
    const { image, meta } = letterbox(solid(320, 240, 10), 160);
    expect(image.width).toBe(160);
    expect(meta.scale).toBeCloseTo(0.5, 12);
    expect(meta.padTop).toBe(20);
  });

  it("maps coordinates between frames invertibly", () => {
    const { meta } = letterbox(solid(704, 480, 0));
    const [tx, ty] = toTarget(meta, 704, 480);
    expect(tx).toBeCloseTo(352, 9);
    expect(ty).toBeCloseTo(296, 9);
    const [sx, sy] = toSource(meta, tx, ty);
    expect(sx).toBeCloseTo(704, 9);
    expect(sy).toBeCloseTo(480, 9);
    const [cx, cy] = toSource(meta, 0, 56);
    expect(cx).toBeCloseTo(0, 9);
    expect(cy).toBeCloseTo(0, 9);
  });

  it("rejects empty images", () => {
    expect(() => letterbox({ width: 0, height: 0, data: new Uint8Array(0) })).toThrow(/non-empty/);
  });
});
