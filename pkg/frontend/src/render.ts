// Grayscale rendering helpers. The pixel conversion is pure so it can be
// tested headlessly; only paintGrid touches a real canvas.

import { valueToGray } from "./coords.js";

/** Flat row-major values in [-1, 1] -> RGBA bytes (opaque grayscale). */
export function imageToRgba(values: number[]): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    const g = valueToGray(values[i]);
    out[4 * i] = g;
    out[4 * i + 1] = g;
    out[4 * i + 2] = g;
    out[4 * i + 3] = 255;
  }
  return out;
}

/** Paints a [rows, cols] image scaled up to fill the canvas, no smoothing. */
export function paintGrid(
  canvas: HTMLCanvasElement,
  values: number[],
  gridShape: number[],
): void {
  const [rows, cols] = gridShape;
  const ctx = canvas.getContext("2d")!;
  const tile = document.createElement("canvas");
  tile.width = cols;
  tile.height = rows;
  const tileCtx = tile.getContext("2d")!;
  tileCtx.putImageData(new ImageData(imageToRgba(values), cols, rows), 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(tile, 0, 0, cols, rows, 0, 0, canvas.width, canvas.height);
}
