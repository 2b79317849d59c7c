/** Pure pixel compositing for the mask overlay (no canvas dependency). */

export class ShapeMismatch extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ShapeMismatch";
  }
}

export interface Rgba {
  data: Uint8ClampedArray; // RGBA, row-major
  width: number;
  height: number;
}

export const MASK_TINT: readonly [number, number, number] = [64, 156, 255];

/**
 * Alpha-blend the mask tint over the image. `mask` holds one byte per pixel
 * (nonzero = foreground). Returns a new buffer; the input is untouched.
 *
 * opacity 0 returns the raw image, a full mask gives a uniform tint at the
 * set opacity.
 */
export function compositeOverlay(image: Rgba, mask: Uint8Array, opacity: number): Rgba {
  const { width, height, data } = image;
  if (data.length !== width * height * 4) {
    throw new ShapeMismatch(`image buffer has ${data.length} bytes, expected ${width * height * 4}`);
  }
  if (mask.length !== width * height) {
    throw new ShapeMismatch(`mask has ${mask.length} pixels, image has ${width * height}`);
  }
  const a = Math.min(1, Math.max(0, opacity));
  const out = new Uint8ClampedArray(data);
  if (a === 0) {
    return { data: out, width, height };
  }
  const [tr, tg, tb] = MASK_TINT;
  for (let i = 0; i < mask.length; i++) {
    if (mask[i] === 0) continue;
    const j = i * 4;
    out[j] = out[j] * (1 - a) + tr * a;
    out[j + 1] = out[j + 1] * (1 - a) + tg * a;
    out[j + 2] = out[j + 2] * (1 - a) + tb * a;
  }
  return { data: out, width, height };
}
