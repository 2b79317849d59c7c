/** Canvas <-> image-pixel mapping with aspect-preserving letterboxing. */

export interface Viewport {
  canvasWidth: number;
  canvasHeight: number;
  imageWidth: number;
  imageHeight: number;
}

export interface FitTransform {
  scale: number; // canvas px per image px
  offsetX: number;
  offsetY: number;
}

export function fitTransform(v: Viewport): FitTransform {
  const scale = Math.min(v.canvasWidth / v.imageWidth, v.canvasHeight / v.imageHeight);
  return {
    scale,
    offsetX: (v.canvasWidth - v.imageWidth * scale) / 2,
    offsetY: (v.canvasHeight - v.imageHeight * scale) / 2,
  };
}

/**
 * Map a canvas-space point to the image pixel under it, or null when the
 * point falls in the letterbox bars or outside the image.
 */
export function canvasToImage(
  x: number,
  y: number,
  v: Viewport,
): { row: number; col: number } | null {
  const t = fitTransform(v);
  const col = Math.floor((x - t.offsetX) / t.scale);
  const row = Math.floor((y - t.offsetY) / t.scale);
  if (row < 0 || col < 0 || row >= v.imageHeight || col >= v.imageWidth) {
    return null;
  }
  return { row, col };
}

/** Canvas-space center of an image pixel. */
export function imageToCanvas(row: number, col: number, v: Viewport): { x: number; y: number } {
  const t = fitTransform(v);
  return { x: t.offsetX + (col + 0.5) * t.scale, y: t.offsetY + (row + 0.5) * t.scale };
}

/**
 * On-canvas radius of a click marker whose true diameter is `sizePx` image
 * pixels: the circle must cover exactly the pixels the server's disk did.
 */
export function markerRadiusCanvasPx(sizePx: number, v: Viewport): number {
  return (sizePx * fitTransform(v).scale) / 2;
}
