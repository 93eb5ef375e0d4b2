/** Browser entry point: DOM wiring around the App controller. Everything
 * with interesting behavior lives in the imported modules; this file only
 * touches the DOM and the canvas. */

import { ApiClient, Polarity } from "./api.js";
import { App, Marker, PngDecoder, Renderer } from "./app.js";
import { NEGATIVE_COLOR, POSITIVE_COLOR } from "./overlay.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function loadImage(src: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error("could not decode image"));
    img.src = src;
  });
}

class CanvasRenderer implements Renderer {
  private image = el<HTMLCanvasElement>("image-layer");
  private overlay = el<HTMLCanvasElement>("overlay-layer");
  private markers = el<HTMLCanvasElement>("marker-layer");
  private captionPanel = el<HTMLElement>("caption-panel");
  private messageBar = el<HTMLElement>("message-bar");
  private clickCount = el<HTMLElement>("click-count");

  showImage(imageB64: string, width: number, height: number, zoom: number): void {
    for (const c of [this.image, this.overlay, this.markers]) {
      c.width = width * zoom;
      c.height = height * zoom;
    }
    void loadImage(`data:image/png;base64,${imageB64}`).then((img) => {
      const ctx = this.image.getContext("2d")!;
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(img, 0, 0, width * zoom, height * zoom);
    });
  }

  showOverlay(layer: Uint8ClampedArray | null, width: number, height: number): void {
    const ctx = this.overlay.getContext("2d")!;
    ctx.clearRect(0, 0, this.overlay.width, this.overlay.height);
    if (!layer) return;
    const off = document.createElement("canvas");
    off.width = width;
    off.height = height;
    off.getContext("2d")!.putImageData(
      new ImageData(new Uint8ClampedArray(layer), width, height), 0, 0);
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(off, 0, 0, this.overlay.width, this.overlay.height);
  }

  showMarkers(markers: Marker[], zoom: number): void {
    const ctx = this.markers.getContext("2d")!;
    ctx.clearRect(0, 0, this.markers.width, this.markers.height);
    const radius = Math.max(3, zoom * 0.6);
    for (const m of markers) {
      const [r, g, b] =
        m.polarity === "positive" ? POSITIVE_COLOR : NEGATIVE_COLOR;
      ctx.beginPath();
      ctx.arc(m.x, m.y, radius, 0, 2 * Math.PI);
      ctx.fillStyle = `rgb(${r},${g},${b})`;
      ctx.fill();
      ctx.strokeStyle = "black";
      ctx.stroke();
    }
  }

  showCaption(caption: string | null, iou: number | null): void {
    this.captionPanel.textContent = caption
      ? `${caption} (IoU ${iou === null ? "?" : iou.toFixed(3)})`
      : "no caption";
  }

  showMessage(message: string | null): void {
    this.messageBar.textContent = message ?? "";
    this.messageBar.hidden = !message;
  }

  showClickCount(count: number): void {
    this.clickCount.textContent = String(count);
  }
}

const browserDecoder: PngDecoder = {
  async decodeGray(b64, width, height) {
    const img = await loadImage(`data:image/png;base64,${b64}`);
    const canvas = document.createElement("canvas");
    canvas.width = width;
    canvas.height = height;
    const ctx = canvas.getContext("2d")!;
    ctx.drawImage(img, 0, 0);
    const rgba = ctx.getImageData(0, 0, width, height).data;
    const gray = new Uint8ClampedArray(width * height);
    for (let i = 0; i < gray.length; i++) gray[i] = rgba[4 * i];
    return gray;
  },
};

function fileToBase64(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => {
      const url = reader.result as string;
      resolve(url.slice(url.indexOf(",") + 1));
    };
    reader.onerror = () => reject(new Error("could not read file"));
    reader.readAsDataURL(file);
  });
}

function wire(): void {
  const app = new App(new ApiClient(""), new CanvasRenderer(), browserDecoder);

  const zoomSelect = el<HTMLSelectElement>("zoom");
  app.zoom = Number(zoomSelect.value);

  el<HTMLInputElement>("file-input").addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const b64 = await fileToBase64(file);
    const img = await loadImage(`data:image/png;base64,${b64}`);
    app.zoom = Number(zoomSelect.value);
    await app.upload(b64, img.naturalWidth, img.naturalHeight);
  });

  const markerLayer = el<HTMLCanvasElement>("marker-layer");
  markerLayer.addEventListener("click", (ev) => {
    const rect = markerLayer.getBoundingClientRect();
    void app.clickCanvas(ev.clientX - rect.left, ev.clientY - rect.top);
  });
  // right-click places a seed of the opposite polarity
  markerLayer.addEventListener("contextmenu", (ev) => {
    ev.preventDefault();
    const rect = markerLayer.getBoundingClientRect();
    const opposite: Polarity =
      app.state.tool === "positive" ? "negative" : "positive";
    void app.clickCanvas(ev.clientX - rect.left, ev.clientY - rect.top, opposite);
  });

  el<HTMLElement>("undo-button").addEventListener("click", () => void app.undo());

  for (const tool of ["positive", "negative"] as const) {
    el<HTMLInputElement>(`tool-${tool}`).addEventListener("change", () =>
      app.setTool(tool));
  }
  el<HTMLSelectElement>("overlay-mode").addEventListener("change", (ev) => {
    void app.setOverlayMode(
      (ev.target as HTMLSelectElement).value as "probability" | "mask" | "contour");
  });
}

wire();
