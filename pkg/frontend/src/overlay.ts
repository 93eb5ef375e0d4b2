/** Pure overlay compositing on raw pixel arrays, so rendering logic is
 * testable without a real canvas. All functions return RGBA buffers sized
 * width*height*4 that the renderer draws on top of the image layer. */

export const POSITIVE_COLOR: [number, number, number] = [64, 220, 64];
export const NEGATIVE_COLOR: [number, number, number] = [230, 60, 60];
export const HEAT_COLOR: [number, number, number] = [255, 80, 40];
export const CONTOUR_COLOR: [number, number, number] = [255, 230, 40];

function blank(width: number, height: number): Uint8ClampedArray {
  return new Uint8ClampedArray(width * height * 4);
}

/** Probability heat layer: per-pixel alpha is probability times the global
 * opacity, so a uniform 0.5 map at opacity 1 renders as a uniform
 * half-opacity layer. `gray` holds 0..255 probability values. */
export function probabilityLayer(
  gray: Uint8ClampedArray | Uint8Array,
  width: number,
  height: number,
  opacity: number,
): Uint8ClampedArray {
  if (gray.length !== width * height) {
    throw new Error(`probability layer: ${gray.length} values for ${width}x${height}`);
  }
  const out = blank(width, height);
  for (let i = 0; i < gray.length; i++) {
    out[4 * i] = HEAT_COLOR[0];
    out[4 * i + 1] = HEAT_COLOR[1];
    out[4 * i + 2] = HEAT_COLOR[2];
    out[4 * i + 3] = Math.round(gray[i] * opacity);
  }
  return out;
}

/** Solid mask layer: foreground pixels tinted at the given opacity. */
export function maskLayer(
  mask: Uint8ClampedArray | Uint8Array,
  width: number,
  height: number,
  opacity: number,
): Uint8ClampedArray {
  if (mask.length !== width * height) {
    throw new Error(`mask layer: ${mask.length} values for ${width}x${height}`);
  }
  const out = blank(width, height);
  const alpha = Math.round(255 * opacity);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i] > 127) {
      out[4 * i] = HEAT_COLOR[0];
      out[4 * i + 1] = HEAT_COLOR[1];
      out[4 * i + 2] = HEAT_COLOR[2];
      out[4 * i + 3] = alpha;
    }
  }
  return out;
}

/** Contour layer: foreground pixels with a background 8-neighbor (the image
 * edge counts as background). An empty mask yields a fully transparent
 * layer, i.e. no contour. */
export function contourLayer(
  mask: Uint8ClampedArray | Uint8Array,
  width: number,
  height: number,
): Uint8ClampedArray {
  const out = blank(width, height);
  const fg = (x: number, y: number): boolean =>
    x >= 0 && y >= 0 && x < width && y < height && mask[y * width + x] > 127;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (!fg(x, y)) continue;
      let boundary = false;
      for (let dy = -1; dy <= 1 && !boundary; dy++) {
        for (let dx = -1; dx <= 1; dx++) {
          if ((dx || dy) && !fg(x + dx, y + dy)) {
            boundary = true;
            break;
          }
        }
      }
      if (boundary) {
        const i = y * width + x;
        out[4 * i] = CONTOUR_COLOR[0];
        out[4 * i + 1] = CONTOUR_COLOR[1];
        out[4 * i + 2] = CONTOUR_COLOR[2];
        out[4 * i + 3] = 255;
      }
    }
  }
  return out;
}
