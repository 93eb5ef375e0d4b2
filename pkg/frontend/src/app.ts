/** Framework-free controller wiring the API client, the UI state and a
 * renderer. The renderer and the PNG decoder are injected so the whole
 * interaction loop runs under test without a real canvas. */

import { ApiClient, ApiError, Polarity, Proposal, SessionResult } from "./api.js";
import { canvasToImage, imageToCanvasCenter } from "./coords.js";
import { contourLayer, maskLayer, probabilityLayer } from "./overlay.js";
import {
  OverlayMode,
  UiState,
  applyResult,
  initialState,
  setBusy,
  setMessage,
  setOverlayMode,
  setTool,
  startSession,
} from "./state.js";

export interface Marker {
  x: number;
  y: number;
  polarity: Polarity;
}

export interface Renderer {
  showImage(imageB64: string, width: number, height: number, zoom: number): void;
  showOverlay(layer: Uint8ClampedArray | null, width: number, height: number): void;
  showMarkers(markers: Marker[], zoom: number): void;
  showCaption(caption: string | null, iou: number | null): void;
  showMessage(message: string | null): void;
  showClickCount(count: number): void;
}

export interface PngDecoder {
  /** Decode a base64 grayscale PNG into one 0..255 value per pixel. */
  decodeGray(b64: string, width: number, height: number): Promise<Uint8ClampedArray>;
}

export class App {
  state: UiState = initialState();

  constructor(
    private api: ApiClient,
    private renderer: Renderer,
    private decoder: PngDecoder,
    public zoom: number = 1,
  ) {}

  async upload(
    imageB64: string,
    width: number,
    height: number,
    proposals?: Proposal[],
  ): Promise<void> {
    if (this.state.busy) return;
    this.state = setBusy(this.state, true);
    const oldSession = this.state.sessionId;
    try {
      const id = await this.api.createSession(imageB64, proposals);
      if (oldSession) {
        await this.api.deleteSession(oldSession).catch(() => undefined);
      }
      this.state = startSession(this.state, id, width, height);
      this.renderer.showImage(imageB64, width, height, this.zoom);
      await this.renderResult(await this.api.getResult(id));
    } catch (err) {
      this.state = setMessage(this.state, describe(err));
      this.renderer.showMessage(this.state.message);
    } finally {
      this.state = setBusy(this.state, false);
    }
  }

  /** Handle a click at canvas coordinates with the active polarity tool. */
  async clickCanvas(canvasX: number, canvasY: number, polarity?: Polarity): Promise<void> {
    const sessionId = this.state.sessionId;
    if (this.state.busy || !sessionId) return;
    const pt = canvasToImage(
      canvasX, canvasY, this.zoom, this.state.imageWidth, this.state.imageHeight);
    if (!pt) {
      this.state = setMessage(this.state, "click outside the image ignored");
      this.renderer.showMessage(this.state.message);
      return;
    }
    this.state = setBusy(this.state, true);
    try {
      const result = await this.api.addSeed(
        sessionId, pt.x, pt.y, polarity ?? this.state.tool);
      await this.renderResult(result);
    } catch (err) {
      this.state = setMessage(this.state, describe(err));
      this.renderer.showMessage(this.state.message);
    } finally {
      this.state = setBusy(this.state, false);
    }
  }

  async undo(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (this.state.busy || !sessionId) return;
    this.state = setBusy(this.state, true);
    try {
      await this.renderResult(await this.api.undo(sessionId));
    } catch (err) {
      this.state = setMessage(this.state, describe(err));
      this.renderer.showMessage(this.state.message);
    } finally {
      this.state = setBusy(this.state, false);
    }
  }

  setTool(tool: Polarity): void {
    this.state = setTool(this.state, tool);
  }

  async setOverlayMode(mode: OverlayMode): Promise<void> {
    this.state = setOverlayMode(this.state, mode);
    if (this.state.lastResult) await this.renderResult(this.state.lastResult);
  }

  private async renderResult(result: SessionResult): Promise<void> {
    this.state = applyResult(this.state, result);
    const { imageWidth: w, imageHeight: h } = this.state;
    let layer: Uint8ClampedArray;
    if (this.state.overlayMode === "probability") {
      const gray = await this.decoder.decodeGray(result.prob_png, w, h);
      layer = probabilityLayer(gray, w, h, this.state.overlayOpacity);
    } else {
      const mask = await this.decoder.decodeGray(result.mask_png, w, h);
      layer = this.state.overlayMode === "mask"
        ? maskLayer(mask, w, h, this.state.overlayOpacity)
        : contourLayer(mask, w, h);
    }
    this.renderer.showOverlay(layer, w, h);
    this.renderer.showMarkers(
      this.state.seeds.map(([x, y, polarity]) => {
        const c = imageToCanvasCenter(x, y, this.zoom);
        return { x: c.x, y: c.y, polarity };
      }),
      this.zoom,
    );
    this.renderer.showCaption(this.state.caption, this.state.iou);
    this.renderer.showClickCount(this.state.seeds.length);
    this.renderer.showMessage(null);
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `server error ${err.status}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}
