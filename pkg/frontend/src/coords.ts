/** Canvas-pixel to image-pixel mapping. The canvas is the image scaled by an
 * integer-or-fractional zoom factor with no offset; coordinates posted to the
 * server must be exact integer image pixels at every zoom level. */

export interface ImagePoint {
  x: number;
  y: number;
}

/** Map a click position inside the canvas to the image pixel it covers,
 * or null when the click falls outside the image. */
export function canvasToImage(
  canvasX: number,
  canvasY: number,
  zoom: number,
  imageWidth: number,
  imageHeight: number,
): ImagePoint | null {
  if (zoom <= 0) throw new Error(`zoom must be positive, got ${zoom}`);
  const x = Math.floor(canvasX / zoom);
  const y = Math.floor(canvasY / zoom);
  if (x < 0 || y < 0 || x >= imageWidth || y >= imageHeight) return null;
  return { x, y };
}

/** Inverse mapping: the canvas-space center of an image pixel, used to place
 * click markers so they sit on the pixel they refer to. */
export function imageToCanvasCenter(x: number, y: number, zoom: number): ImagePoint {
  return { x: (x + 0.5) * zoom, y: (y + 0.5) * zoom };
}
